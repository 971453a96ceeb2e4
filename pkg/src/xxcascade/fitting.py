"""Least-squares fits: Lorentzian peak clusters, damped Rabi curves, FSS scans.

All three share one small Levenberg-Marquardt engine with analytic Jacobians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hardware import BeamSplitterModel, CoincidenceHistogram


class FitError(ValueError):
    pass


@dataclass
class LMResult:
    params: np.ndarray
    cost: float
    iterations: int
    converged: bool
    jacobian: np.ndarray
    residuals: np.ndarray


def levenberg_marquardt(residual, jacobian, p0, *, max_iter: int = 500, rtol: float = 1e-10) -> LMResult:
    """Minimize ``0.5 * |residual(p)|^2`` by damped Gauss-Newton steps.

    Converged when the undamped Gauss-Newton step predicts a cost decrease
    below ``rtol`` relative, when the cost reaches round-off level, or when no
    damping makes progress (a minimum to machine precision).  Exhausting
    ``max_iter`` returns the last iterate with ``converged=False``.
    """
    p = np.array(p0, dtype=float)
    r = residual(p)
    cost = 0.5 * float(r @ r)
    jac = jacobian(p)
    floor = 1e-30 * max(1.0, cost)
    lam = None
    nu = 2.0
    for it in range(1, max_iter + 1):
        jtj = jac.T @ jac
        g = jac.T @ r
        diag = np.maximum(np.diag(jtj), 1e-300)
        if lam is None:
            lam = 1e-3
        while True:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                p_new = p + step
                r_new = residual(p_new)
                cost_new = 0.5 * float(r_new @ r_new)
                pred = -float(g @ step) - 0.5 * float(step @ jtj @ step)
                if np.isfinite(cost_new) and cost_new < cost and pred > 0:
                    rho = (cost - cost_new) / pred
                    lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                    nu = 2.0
                    break
            lam *= nu
            nu *= 2.0
            if lam > 1e30:
                return LMResult(p, cost, it, True, jac, r)
        p, r, cost = p_new, r_new, cost_new
        jac = jacobian(p)
        if cost <= floor:
            return LMResult(p, cost, it, True, jac, r)
        # Decrease promised by a full Gauss-Newton step from here.
        gn = np.linalg.lstsq(jac, -r, rcond=None)[0]
        jgn = jac @ gn
        if 0.5 * float(jgn @ jgn) <= rtol * cost:
            return LMResult(p, cost, it, True, jac, r)
    return LMResult(p, cost, max_iter, False, jac, r)


def _std_errors(res: LMResult, absolute_sigma: bool) -> np.ndarray:
    n, k = res.jacobian.shape
    try:
        cov = np.linalg.inv(res.jacobian.T @ res.jacobian)
    except np.linalg.LinAlgError:
        return np.full(k, np.nan)
    if not absolute_sigma:
        cov = cov * (2.0 * res.cost / max(n - k, 1))
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


@dataclass
class FitReport:
    model: str
    names: list[str]
    values: np.ndarray
    std_errors: np.ndarray
    residual_rms: float
    converged: bool
    iterations: int
    notes: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def stderr(self, name: str) -> float:
        return float(self.std_errors[self.names.index(name)])


# -- Lorentzian clusters ------------------------------------------------------

POISSON_REWEIGHTS = 20

@dataclass(frozen=True)
class LorentzianPeak:
    center_ns: float
    fwhm_ns: float
    area: float


def lorentzian_bin_counts(edges: np.ndarray, peaks, offset: float = 0.0) -> np.ndarray:
    """Expected counts per bin: each peak integrated exactly over the bin, plus a flat offset per bin."""
    edges = np.asarray(edges, dtype=float)
    out = np.full(len(edges) - 1, float(offset))
    for pk in peaks:
        gamma = 0.5 * pk.fwhm_ns
        cdf = np.arctan((edges - pk.center_ns) / gamma)
        out += pk.area / math.pi * np.diff(cdf)
    return out


class _LorentzModel:
    def __init__(self, edges, n_peaks, offset):
        self.lo, self.hi = edges[:-1], edges[1:]
        self.n = n_peaks
        self.offset = offset

    def __call__(self, p):
        out = np.full(len(self.lo), p[3 * self.n] if self.offset else 0.0)
        for j in range(self.n):
            area, c, w = p[3 * j:3 * j + 3]
            g = 0.5 * abs(w)
            out += area / math.pi * (np.arctan((self.hi - c) / g) - np.arctan((self.lo - c) / g))
        return out

    def jacobian(self, p):
        jac = np.empty((len(self.lo), len(p)))
        for j in range(self.n):
            area, c, w = p[3 * j:3 * j + 3]
            g = 0.5 * abs(w)
            uh, ul = (self.hi - c) / g, (self.lo - c) / g
            dh, dl = 1.0 / (1.0 + uh * uh), 1.0 / (1.0 + ul * ul)
            jac[:, 3 * j] = (np.arctan(uh) - np.arctan(ul)) / math.pi
            jac[:, 3 * j + 1] = area / math.pi * (dl - dh) / g
            jac[:, 3 * j + 2] = area / math.pi * (ul * dl - uh * dh) / g * 0.5 * math.copysign(1.0, w)
        if self.offset:
            jac[:, 3 * self.n] = 1.0
        return jac


def fit_lorentzians(
    hist: CoincidenceHistogram,
    n_peaks: int,
    init_centers,
    *,
    init_fwhm_ns: float = 0.5,
    fit_range_ns: tuple[float, float] | None = None,
    offset: bool = False,
    weights: str = "uniform",
):
    """Least-squares fit of ``n_peaks`` Lorentzians to a coincidence histogram.

    The model integrates each Lorentzian exactly over every bin.  Returns
    ``(peaks sorted by center, FitReport)``.  ``weights="poisson"`` weights
    bins by the inverse model rate, iterated to the Poisson likelihood
    maximum, and reports absolute standard errors;
    the default unweighted fit scales errors by the residual variance.
    """
    centers0 = np.asarray(init_centers, dtype=float)
    if n_peaks < 1 or len(centers0) != n_peaks:
        raise FitError("need n_peaks >= 1 and one initial center per peak")
    srt = np.sort(centers0)
    if np.any(np.diff(srt) < 1e-6):
        raise FitError("initial peak centers overlap within 1e-6 ns")
    edges = hist.bin_edges_ns
    y = hist.counts.astype(float)
    if fit_range_ns is not None:
        keep = (edges[:-1] >= fit_range_ns[0]) & (edges[1:] <= fit_range_ns[1])
        idx = np.flatnonzero(keep)
        if len(idx) == 0:
            raise FitError("fit range selects no bins")
        edges = edges[idx[0]:idx[-1] + 2]
        y = y[idx[0]:idx[-1] + 1]
    if srt[0] < edges[0] or srt[-1] > edges[-1]:
        raise FitError("initial centers fall outside the histogram range")
    if weights not in ("uniform", "poisson"):
        raise FitError(f"unknown weighting {weights!r}")
    model = _LorentzModel(edges, n_peaks, offset)
    centers = 0.5 * (edges[:-1] + edges[1:])
    p0 = []
    half = 0.5 * float(np.min(np.diff(srt))) if n_peaks > 1 else 2.0 * init_fwhm_ns
    for c in centers0:
        sel = np.abs(centers - c) <= half
        p0 += [max(float(y[sel].sum()), 1.0), c, init_fwhm_ns]
    if offset:
        p0.append(float(np.median(y)))
    def solve(sw, start):
        return levenberg_marquardt(
            lambda p: sw * (model(p) - y),
            lambda p: sw[:, None] * model.jacobian(p),
            start,
        )

    if weights == "poisson":
        # Reweighting by 1/model has the Poisson likelihood maximum as its
        # fixed point; weights from the data alone bias low-count bins.
        res = solve(1.0 / np.sqrt(np.maximum(y, 1.0)), p0)
        for _ in range(POISSON_REWEIGHTS):
            prev = res.params
            res = solve(1.0 / np.sqrt(np.maximum(model(prev), 1e-3)), prev)
            if np.allclose(res.params, prev, rtol=1e-9, atol=1e-12):
                break
    else:
        res = solve(np.ones_like(y), p0)
    errs = _std_errors(res, absolute_sigma=(weights == "poisson"))
    peaks = []
    names = []
    for j in range(n_peaks):
        a, c, w = res.params[3 * j:3 * j + 3]
        peaks.append(LorentzianPeak(float(c), float(abs(w)), float(a)))
        names += [f"area_{j}", f"center_{j}", f"fwhm_{j}"]
    values = np.array(res.params, dtype=float)
    values[2::3][:n_peaks] = np.abs(values[2::3][:n_peaks])
    if offset:
        names.append("offset")
    order = np.argsort([pk.center_ns for pk in peaks], kind="stable")
    peaks = [peaks[i] for i in order]
    perm = np.concatenate([[3 * i, 3 * i + 1, 3 * i + 2] for i in order] + ([[3 * n_peaks]] if offset else []))
    rms = float(np.sqrt(np.mean((model(res.params) - y) ** 2)))
    report = FitReport("lorentzian_sum", names, values[perm], errs[perm], rms, res.converged, res.iterations)
    return peaks, report


def fit_peak_cluster(hist: CoincidenceHistogram, centers, half_window_ns: float = 0.6, **kwargs):
    """Fit one Lorentzian per peak, each restricted to ``center +/- half_window_ns``.

    Jitter-broadened peaks are closer to Gaussian than Lorentzian; a joint fit
    lets the heavy Lorentzian tails of large neighbours swallow area from a
    small central peak.  Local fits see only each peak's core, so the shape
    mismatch biases every area by the same factor and area ratios survive.
    Returns ``(peaks sorted by center, list of FitReport)``.
    """
    peaks, reports = [], []
    for c in sorted(float(x) for x in centers):
        pk, rep = fit_lorentzians(
            hist, 1, [c], fit_range_ns=(c - half_window_ns, c + half_window_ns), **kwargs
        )
        peaks += pk
        reports.append(rep)
    return peaks, reports


@dataclass(frozen=True)
class HomVisibility:
    v_raw: float
    v_corrected: float
    clipped: bool
    correction_factor: float


def _peak_near(peaks, center, tol):
    best = min(peaks, key=lambda pk: abs(pk.center_ns - center), default=None)
    if best is None or abs(best.center_ns - center) > tol:
        return None
    return best


def normalized_central_area(peaks, separation_ns: float = 2.0, tol_ns: float = 0.5) -> float:
    """Zero-delay peak area over the mean of the +/-separation neighbours (raw area if they are absent)."""
    central = _peak_near(peaks, 0.0, tol_ns)
    if central is None:
        raise FitError("no peak found near zero delay")
    left = _peak_near(peaks, -separation_ns, tol_ns)
    right = _peak_near(peaks, separation_ns, tol_ns)
    if left is None or right is None:
        return central.area
    return central.area / (0.5 * (left.area + right.area))


def hom_visibility(peaks_co, peaks_cross, bs: BeamSplitterModel, separation_ns: float = 2.0) -> HomVisibility:
    """Raw and splitter-corrected two-photon interference visibility.

    ``v_raw = (A_cross(0) - A_co(0)) / A_cross(0)`` on side-peak-normalized
    central areas; ``v_corrected = v_raw (R^2 + T^2) / (2 R T (1 - eps)^2)``,
    clipped to [0, 1] with ``clipped`` set when that happens.
    """
    a_co = normalized_central_area(peaks_co, separation_ns)
    a_cross = normalized_central_area(peaks_cross, separation_ns)
    if a_cross == 0:
        raise FitError("cross-polarized central peak has zero area")
    v_raw = (a_cross - a_co) / a_cross
    factor = bs.correction_factor
    v = v_raw * factor
    clipped = not 0.0 <= v <= 1.0
    return HomVisibility(v_raw, min(max(v, 0.0), 1.0), clipped, factor)


# -- damped Rabi ---------------------------------------------------------------

@dataclass(frozen=True)
class RabiCurve:
    pulse_areas: np.ndarray
    populations: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.pulse_areas, dtype=float)
        p = np.asarray(self.populations, dtype=float)
        if a.shape != p.shape or a.ndim != 1:
            raise ValueError("pulse_areas and populations must be 1-D and equally long")
        object.__setattr__(self, "pulse_areas", a)
        object.__setattr__(self, "populations", p)


def damped_rabi(theta_pi, amplitude: float, kappa: float, offset: float):
    """``amplitude * (1 - exp(-kappa theta) cos theta) / 2 + offset`` with theta = pi * theta_pi."""
    th = math.pi * np.asarray(theta_pi, dtype=float)
    return amplitude * 0.5 * (1.0 - np.exp(-kappa * th) * np.cos(th)) + offset


def fit_damped_rabi(curve: RabiCurve) -> FitReport:
    """Fit amplitude, damping per radian (kept >= 0) and offset."""
    th = math.pi * curve.pulse_areas
    y = curve.populations
    if len(th) < 8 or np.ptp(th) < 2.0 * math.pi:
        raise FitError("need at least 8 samples spanning at least 2 pi of pulse area")

    def model(p, fix_kappa=None):
        a, k, o = p if fix_kappa is None else (p[0], fix_kappa, p[1])
        return a * 0.5 * (1.0 - np.exp(-k * th) * np.cos(th)) + o

    def jac(p):
        a, k, _ = p
        e = np.exp(-k * th)
        return np.column_stack([0.5 * (1.0 - e * np.cos(th)), 0.5 * a * th * e * np.cos(th), np.ones_like(th)])

    amp0 = max(float(np.ptp(y)), 1e-3)
    res = levenberg_marquardt(lambda p: model(p) - y, jac, [amp0, 0.05, float(np.min(y))])
    notes = []
    if res.params[1] < 0:
        # Active set: pin the damping at its bound and refit the linear pair.
        sub = levenberg_marquardt(
            lambda q: model(q, 0.0) - y,
            lambda q: jac([q[0], 0.0, q[1]])[:, [0, 2]],
            [res.params[0], res.params[2]],
        )
        cov_errs = _std_errors(sub, absolute_sigma=False)
        values = np.array([sub.params[0], 0.0, sub.params[1]])
        errs = np.array([cov_errs[0], 0.0, cov_errs[1]])
        res = LMResult(values, sub.cost, res.iterations + sub.iterations, sub.converged, jac(values), sub.residuals)
        notes.append("damping pinned at lower bound 0")
    else:
        values = res.params.copy()
        errs = _std_errors(res, absolute_sigma=False)
    rms = float(np.sqrt(np.mean((model(values) - y) ** 2)))
    return FitReport("damped_rabi", ["amplitude", "kappa", "offset"], values, errs, rms, res.converged, res.iterations, notes)


# -- fine-structure splitting ----------------------------------------------------

@dataclass(frozen=True)
class FssScan:
    angles_deg: np.ndarray
    delta_e_ueV: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angles_deg, dtype=float)
        d = np.asarray(self.delta_e_ueV, dtype=float)
        if a.shape != d.shape or a.ndim != 1:
            raise ValueError("angles and energy differences must be 1-D and equally long")
        if np.any(a < 0) or np.any(a >= 180):
            raise ValueError("half-wave-plate angles must lie in [0, 180)")
        object.__setattr__(self, "angles_deg", a)
        object.__setattr__(self, "delta_e_ueV", d)


def fss_model(angles_deg, fss_ueV: float, phase_deg: float, offset_ueV: float):
    """X-XX energy difference behind a half-wave plate at ``angles_deg`` and a fixed polarizer."""
    return offset_ueV + fss_ueV * np.cos(np.radians(4.0 * np.asarray(angles_deg, dtype=float) + phase_deg))


def fit_fss(scan: FssScan) -> FitReport:
    """Fit ``offset + fss cos(4 theta + phase)``; a negative amplitude is folded into the phase."""
    ang = scan.angles_deg
    y = scan.delta_e_ueV
    if len(ang) < 8 or np.ptp(ang) < 90.0:
        raise FitError("FSS scan underdetermined: need >= 8 angles spanning >= 90 degrees")
    arg = np.radians(4.0 * ang)
    design = np.column_stack([np.cos(arg), -np.sin(arg), np.ones_like(arg)])
    (ca, sa, off0), *_ = np.linalg.lstsq(design, y, rcond=None)
    amp0 = math.hypot(ca, sa)
    ph0 = math.atan2(sa, ca) if amp0 > 0 else 0.0

    def model(p):
        return p[2] + p[0] * np.cos(arg + p[1])

    def jac(p):
        return np.column_stack([np.cos(arg + p[1]), -p[0] * np.sin(arg + p[1]), np.ones_like(arg)])

    res = levenberg_marquardt(lambda p: model(p) - y, jac, [amp0 if amp0 > 0 else 1e-3, ph0, off0])
    fss, ph, off = res.params
    errs = _std_errors(res, absolute_sigma=False)
    if fss < 0:
        fss, ph = -fss, ph + math.pi
    ph = math.remainder(ph, 2.0 * math.pi)
    if ph <= -math.pi:
        ph += 2.0 * math.pi
    errs = errs * np.array([1.0, 180.0 / math.pi, 1.0])
    rms = float(np.sqrt(np.mean((model(res.params) - y) ** 2)))
    return FitReport(
        "fss_cosine",
        ["fss_ueV", "phase_deg", "offset_ueV"],
        np.array([fss, math.degrees(ph), off]),
        errs,
        rms,
        res.converged,
        res.iterations,
    )
