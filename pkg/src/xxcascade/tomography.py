"""Two-photon polarization tomography.

Sixteen projective settings {H, V, D, R} x {H, V, D, R}, a Poisson forward
model, exact linear inversion and a maximum-likelihood reconstruction over a
Cholesky parameterization ``M = T^H T`` (``T`` lower triangular, 16 reals) so
that every iterate is a physical state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qcore import (
    eig_hermitian,
    polarization,
    project_to_physical,
    validate_density_matrix,
)
from .rng import substream

TOMOGRAPHY_AXES = ("H", "V", "D", "R")

_IU = np.triu_indices(4, 1)
# Strictly-lower entries of T in parameter order: (1,0) (2,0) (3,0) (2,1) (3,1) (3,2).
_IL = (np.array([1, 2, 3, 2, 3, 3]), np.array([0, 0, 0, 1, 1, 2]))


class TomographyError(ValueError):
    pass


@dataclass(frozen=True)
class MeasurementSetting:
    """XX-arm and X-arm analyzer directions, named by a two-letter label like ``"DR"``."""

    label: str

    def __post_init__(self):
        if len(self.label) != 2:
            raise ValueError(f"setting label must have two letters, got {self.label!r}")
        polarization(self.label[0])
        polarization(self.label[1])

    @property
    def xx_ket(self) -> np.ndarray:
        return polarization(self.label[0])

    @property
    def x_ket(self) -> np.ndarray:
        return polarization(self.label[1])

    @property
    def ket(self) -> np.ndarray:
        return np.kron(self.xx_ket, self.x_ket)

    @property
    def projector(self) -> np.ndarray:
        k = self.ket
        return np.outer(k, k.conj())

    def probability(self, rho) -> float:
        k = self.ket
        return float(np.real(k.conj() @ np.asarray(rho) @ k))


def canonical_settings() -> tuple[MeasurementSetting, ...]:
    return tuple(MeasurementSetting(a + b) for a in TOMOGRAPHY_AXES for b in TOMOGRAPHY_AXES)


@dataclass(frozen=True)
class TomographyCounts:
    settings: tuple[MeasurementSetting, ...]
    counts: np.ndarray
    exposure: np.ndarray = field(default=None)

    def __post_init__(self):
        settings = tuple(s if isinstance(s, MeasurementSetting) else MeasurementSetting(s) for s in self.settings)
        counts = np.asarray(self.counts)
        exposure = np.ones(len(settings)) if self.exposure is None else np.asarray(self.exposure, dtype=float)
        if not (len(settings) == len(counts) == len(exposure) == 16):
            raise TomographyError(
                f"need 16 settings, counts and exposures, got {len(settings)}, {len(counts)}, {len(exposure)}"
            )
        if np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0)):
            raise TomographyError("counts must be non-negative integers")
        if np.any(~np.isfinite(exposure)) or np.any(exposure <= 0):
            raise TomographyError("exposure weights must be finite and > 0")
        object.__setattr__(self, "settings", settings)
        object.__setattr__(self, "counts", counts.astype(np.int64))
        object.__setattr__(self, "exposure", exposure)

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.settings]

    def canonical_order(self) -> "TomographyCounts":
        order = sorted(range(16), key=lambda i: (self.settings[i].label, int(self.counts[i]), float(self.exposure[i])))
        return TomographyCounts(
            tuple(self.settings[i] for i in order), self.counts[order], self.exposure[order]
        )


def hvec(m: np.ndarray) -> np.ndarray:
    """Real 16-vector of a Hermitian 4x4 with ``tr(A B) = hvec(A) . hvec(B)``."""
    m = np.asarray(m, dtype=complex)
    up = m[_IU]
    return np.concatenate([np.diag(m).real, math.sqrt(2.0) * up.real, math.sqrt(2.0) * up.imag])


def from_hvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    m = np.diag(v[:4].astype(complex))
    up = (v[4:10] + 1j * v[10:16]) / math.sqrt(2.0)
    m[_IU] = up
    m[(_IU[1], _IU[0])] = up.conj()
    return m


def design_matrix(settings, exposure=None) -> np.ndarray:
    rows = np.array([hvec(s.projector) for s in settings])
    if exposure is not None:
        rows = rows * np.asarray(exposure, dtype=float)[:, None]
    return rows


def simulate_counts(rho, settings, n_per_setting: float, seed: int, exposure=None) -> TomographyCounts:
    """Poisson counts with mean ``n_per_setting * exposure_s * tr(rho Pi_s)``."""
    if not n_per_setting > 0:
        raise ValueError("n_per_setting must be > 0")
    rho = validate_density_matrix(rho)
    settings = tuple(settings)
    w = np.ones(len(settings)) if exposure is None else np.asarray(exposure, dtype=float)
    probs = np.clip([s.probability(rho) for s in settings], 0.0, None)
    counts = substream(seed, "tomography", "counts").poisson(n_per_setting * w * probs)
    return TomographyCounts(settings, counts, w)


@dataclass(frozen=True)
class LinearInversion:
    matrix: np.ndarray
    total_rate: float
    min_eigenvalue: float

    @property
    def physical(self) -> bool:
        return self.min_eigenvalue >= -1e-9


def _dependent_settings(rows: np.ndarray, labels) -> list[str]:
    basis = np.zeros((0, rows.shape[1]))
    bad = []
    for row, label in zip(rows, labels):
        trial = np.vstack([basis, row])
        if np.linalg.matrix_rank(trial, tol=1e-9) > basis.shape[0]:
            basis = trial
        else:
            bad.append(label)
    return bad


def linear_inversion(data: TomographyCounts) -> LinearInversion:
    """Solve ``exposure_s * tr(M Pi_s) = k_s`` exactly, then normalize the trace.

    The result is Hermitian with unit trace but may have negative
    eigenvalues; ``min_eigenvalue`` / ``physical`` flag that.
    """
    rows = design_matrix(data.settings, data.exposure)
    if np.linalg.matrix_rank(rows, tol=1e-9) < 16:
        bad = _dependent_settings(rows, data.labels)
        raise TomographyError(
            "settings are not informationally complete; linearly dependent settings: " + ", ".join(bad)
        )
    m = from_hvec(np.linalg.solve(rows, data.counts.astype(float)))
    total = float(np.trace(m).real)
    if total <= 0:
        raise TomographyError("linear inversion gave a non-positive total rate; not enough counts")
    rho = m / total
    rho = 0.5 * (rho + rho.conj().T)
    return LinearInversion(rho, total, float(eig_hermitian(rho)[0][-1]))


# -- maximum likelihood ------------------------------------------------------

def params_to_t(t: np.ndarray) -> np.ndarray:
    tm = np.zeros((4, 4), dtype=complex)
    tm[np.diag_indices(4)] = t[:4]
    tm[_IL] = t[4:10] + 1j * t[10:16]
    return tm


def t_to_params(tm: np.ndarray) -> np.ndarray:
    return np.concatenate([np.diag(tm).real, tm[_IL].real, tm[_IL].imag])


def params_to_rho(t: np.ndarray) -> np.ndarray:
    tm = params_to_t(t)
    m = tm.conj().T @ tm
    return m / np.trace(m).real


def rho_to_params(m: np.ndarray) -> np.ndarray:
    """Parameters of a lower-triangular ``T`` with ``T^H T = m`` (m positive definite)."""
    rev = np.arange(3, -1, -1)
    chol = np.linalg.cholesky(m[np.ix_(rev, rev)])
    tm = chol.conj().T[np.ix_(rev, rev)]
    return t_to_params(tm)


class _Objective:
    """Log-likelihood of unnormalized ``M = T^H T`` and its analytic gradient."""

    def __init__(self, data: TomographyCounts, likelihood: str):
        if likelihood not in ("poisson", "gaussian"):
            raise ValueError(f"likelihood must be 'poisson' or 'gaussian', got {likelihood!r}")
        self.likelihood = likelihood
        self.k = data.counts.astype(float)
        self.rows = design_matrix(data.settings, data.exposure)
        self.proj = np.array([w * s.projector for s, w in zip(data.settings, data.exposure)])

    def rates(self, t):
        tm = params_to_t(t)
        return self.rows @ hvec(tm.conj().T @ tm), tm

    def value(self, t) -> float:
        mu, _ = self.rates(t)
        if self.likelihood == "gaussian":
            return float(-0.5 * np.sum((self.k - mu) ** 2 / np.maximum(self.k, 1.0)))
        if np.any(mu[self.k > 0] <= 0):
            return -math.inf
        pos = self.k > 0
        return float(np.sum(self.k[pos] * np.log(mu[pos])) - np.sum(mu))

    def gradient(self, t) -> np.ndarray:
        mu, tm = self.rates(t)
        if self.likelihood == "gaussian":
            dmu = (self.k - mu) / np.maximum(self.k, 1.0)
        else:
            dmu = np.where(self.k > 0, self.k / np.where(mu > 0, mu, 1.0), 0.0) - 1.0
        g = np.tensordot(dmu, self.proj, axes=1)
        a = g @ tm.conj().T
        grad_re = 2.0 * a.T.real
        grad_im = -2.0 * a.T.imag
        return np.concatenate([np.diag(grad_re), grad_re[_IL], grad_im[_IL]])


def log_likelihood(data: TomographyCounts, rho, likelihood: str = "poisson") -> float:
    """Log-likelihood of a normalized state, with the total rate profiled out."""
    obj = _Objective(data, likelihood)
    rho = np.asarray(rho, dtype=complex)
    p = obj.rows @ hvec(rho)
    if likelihood == "poisson":
        n = obj.k.sum() / p.sum()
    else:
        wgt = 1.0 / np.maximum(obj.k, 1.0)
        n = np.sum(wgt * obj.k * p) / np.sum(wgt * p * p)
    mu = n * p
    if likelihood == "gaussian":
        return float(-0.5 * np.sum((obj.k - mu) ** 2 / np.maximum(obj.k, 1.0)))
    pos = obj.k > 0
    if np.any(mu[pos] <= 0):
        return -math.inf
    return float(np.sum(obj.k[pos] * np.log(mu[pos])) - np.sum(mu))


def log_likelihood_params(data: TomographyCounts, t, likelihood: str = "poisson") -> float:
    return _Objective(data, likelihood).value(np.asarray(t, dtype=float))


def log_likelihood_gradient(data: TomographyCounts, t, likelihood: str = "poisson") -> np.ndarray:
    """Gradient of the log-likelihood with respect to the 16 Cholesky parameters."""
    return _Objective(data, likelihood).gradient(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class MLEReport:
    log_likelihood: float
    iterations: int
    gradient_norm: float
    converged: bool
    total_rate: float
    likelihood: str

    def as_dict(self) -> dict:
        return {
            "likelihood": self.likelihood,
            "log_likelihood": repr(self.log_likelihood),
            "iterations": self.iterations,
            "gradient_norm": repr(self.gradient_norm),
            "converged": str(self.converged).lower(),
            "total_rate": repr(self.total_rate),
        }


def mle_reconstruct(
    data: TomographyCounts,
    init=None,
    *,
    likelihood: str = "poisson",
    gtol: float = 1e-8,
    max_iter: int = 10_000,
) -> tuple[np.ndarray, MLEReport]:
    """Maximum-likelihood state from 16-setting coincidence counts.

    Quasi-Newton (BFGS) ascent with Armijo backtracking on the Cholesky
    parameters, started from the physical projection of linear inversion
    unless ``init`` is given.  The parameters are scaled by the square root of
    the estimated total rate and the objective is divided by the total number
    of counts, so ``gtol`` is a per-count tolerance on the gradient
    infinity-norm.  If ``max_iter`` is reached the last iterate is returned
    with ``converged=False``.

    Settings are put in a canonical order first, so any permutation of
    (settings, counts) pairs gives a bit-identical result.
    """
    data = data.canonical_order()
    obj = _Objective(data, likelihood)
    ktot = max(float(obj.k.sum()), 1.0)

    if init is None:
        try:
            lin = linear_inversion(data)
            rho0 = project_to_physical(lin.matrix)
        except TomographyError:
            rho0 = np.eye(4, dtype=complex) / 4.0
    else:
        rho0 = project_to_physical(init)
    p0 = obj.rows @ hvec(rho0)
    rate = max(ktot / max(p0.sum(), 1e-300), 1e-12)
    scale = math.sqrt(rate)

    def f(u):
        return -obj.value(scale * u) / ktot

    def grad(u):
        return -obj.gradient(scale * u) * scale / ktot

    u = rho_to_params(rho0)
    fu, gu = f(u), grad(u)
    hinv = np.eye(16)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(gu)) < gtol:
            converged = True
            it -= 1
            break
        step = -hinv @ gu
        slope = float(step @ gu)
        if not slope < 0:
            hinv = np.eye(16)
            step = -gu
            slope = float(step @ gu)
        alpha = 1.0
        while True:
            trial = u + alpha * step
            ft = f(trial)
            if ft <= fu + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-16:
                break
        if alpha < 1e-16:
            if np.allclose(hinv, np.eye(16)):
                break  # stalled on a plain gradient step; report as not converged
            hinv = np.eye(16)
            continue
        g_new = grad(trial)
        s, y = trial - u, g_new - gu
        u, fu, gu = trial, ft, g_new
        sy = float(s @ y)
        if sy > 1e-300:
            rho_k = 1.0 / sy
            hy = hinv @ y
            hinv = (hinv - rho_k * (np.outer(s, hy) + np.outer(hy, s))
                    + (rho_k * rho_k * float(y @ hy) + rho_k) * np.outer(s, s))
    rho = params_to_rho(scale * u)
    rho = 0.5 * (rho + rho.conj().T)
    tm = params_to_t(scale * u)
    report = MLEReport(
        log_likelihood=obj.value(scale * u),
        iterations=it,
        gradient_norm=float(np.max(np.abs(gu))),
        converged=converged,
        total_rate=float(np.trace(tm.conj().T @ tm).real),
        likelihood=likelihood,
    )
    return validate_density_matrix(rho, "mle_reconstruct"), report
