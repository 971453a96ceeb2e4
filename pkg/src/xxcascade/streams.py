"""Event-level Monte Carlo of detection-time streams and coincidence histograms.

A stream holds, per excitation pulse that prepared the biexciton, the XX and
X emission times, the relative HH/VV phase picked up during that particular
exciton dwell, and pre-drawn uniforms that decide polarizer transmission,
beam-splitter routing and detection.  Because the uniforms travel with the
events, any analyzer setting can be applied afterwards without a new seed.

Uncorrelated background photons ("stray" photons) are emitted per pulse and
per line as a Poisson number with mean ``beta / (1 - beta)``, so that a
fraction ``beta`` of each line's photons is background.  They are unpolarized
and follow the same emission-delay profile as the line they contaminate.

Randomness: cycles are processed in fixed blocks of 32768; block ``b`` draws
from the seed path ``("stream", b)`` and dark counts from ``("dark", line,
detector)``.  Results therefore do not depend on how many workers run.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cascade import HBAR_UEV_PS, CascadeParams
from .hardware import (
    BeamSplitterModel,
    CoincidenceHistogram,
    DetectorModel,
    ExperimentClock,
    HistSpec,
)
from .metrics import peak_area
from .rng import child_seed, substream
from .tomography import MeasurementSetting, TomographyCounts, canonical_settings

BLOCK_CYCLES = 1 << 15
LINES = ("XX", "X")
PAIR_CHUNK = 4_000_000


@dataclass(frozen=True)
class EmissionEvent:
    cycle_index: int
    pulse_index: int
    xx_time_ns: float
    x_time_ns: float
    joint_polarization: dict


@dataclass(frozen=True)
class StrayPhotons:
    time_ns: np.ndarray
    u_pol: np.ndarray
    u_route: np.ndarray
    detected: np.ndarray


@dataclass(frozen=True, eq=False)
class PhotonStream:
    params: CascadeParams
    clock: ExperimentClock
    detector: DetectorModel
    seed: int
    cycle: np.ndarray
    pulse: np.ndarray
    xx_emit_ns: np.ndarray
    x_emit_ns: np.ndarray
    xx_det_ns: np.ndarray
    x_det_ns: np.ndarray
    phase: np.ndarray
    flipped: np.ndarray
    u_xx_pol: np.ndarray
    u_x_pol: np.ndarray
    u_xx_route: np.ndarray
    u_x_route: np.ndarray
    xx_detected: np.ndarray
    x_detected: np.ndarray
    stray: dict
    dark: dict

    def __len__(self) -> int:
        return len(self.cycle)

    @property
    def duration_ns(self) -> float:
        return self.clock.n_cycles * self.clock.rep_period_ns

    @property
    def n_pulses(self) -> int:
        return self.clock.n_cycles * self.clock.pulses_per_cycle

    def events(self):
        for i in range(len(self)):
            yield EmissionEvent(
                int(self.cycle[i]),
                int(self.pulse[i]),
                float(self.xx_emit_ns[i]),
                float(self.x_emit_ns[i]),
                {
                    "vv_phase_rad": float(self.phase[i]),
                    "x_spin_flipped": bool(self.flipped[i]),
                    "u_xx": float(self.u_xx_pol[i]),
                    "u_x": float(self.u_x_pol[i]),
                },
            )


def _simulate_block(params, clock, det, seed, b, c0, n_cyc):
    rng = substream(seed, "stream", b)
    ppc = clock.pulses_per_cycle
    n_p = n_cyc * ppc
    cycle = np.repeat(np.arange(c0, c0 + n_cyc, dtype=np.int64), ppc)
    pulse = np.tile(np.arange(ppc, dtype=np.int8), n_cyc)
    t_pulse = cycle * clock.rep_period_ns + pulse * clock.pulse_pair_sep_ns

    prepared = rng.random(n_p) < clock.preparation_probability
    cycle, pulse, t_pulse = cycle[prepared], pulse[prepared], t_pulse[prepared]
    n = len(cycle)
    xx_delay = rng.exponential(params.xx_lifetime_ps * 1e-3, n)
    dwell = rng.exponential(params.t1_ps * 1e-3, n)
    s_eff = params.fss_ueV + params.overhauser_sigma_ueV * rng.standard_normal(n)
    phase = s_eff * (dwell * 1e3) / HBAR_UEV_PS
    flipped = rng.random(n) < params.spin_flip_prob
    u = rng.random((4, n))
    detected = rng.random((2, n)) < det.efficiency
    jit = det.jitter_sigma_ns * rng.standard_normal((2, n))
    xx_emit = t_pulse + xx_delay
    x_emit = xx_emit + dwell
    out = dict(
        cycle=cycle, pulse=pulse, xx_emit_ns=xx_emit, x_emit_ns=x_emit,
        xx_det_ns=xx_emit + jit[0], x_det_ns=x_emit + jit[1], phase=phase, flipped=flipped,
        u_xx_pol=u[0], u_x_pol=u[1], u_xx_route=u[2], u_x_route=u[3],
        xx_detected=detected[0], x_detected=detected[1],
    )

    beta = params.background_fraction
    stray = {}
    all_pulses = np.repeat(np.arange(c0, c0 + n_cyc), ppc) * clock.rep_period_ns + np.tile(
        np.arange(ppc), n_cyc) * clock.pulse_pair_sep_ns
    for line in LINES:
        if beta > 0:
            k = rng.poisson(beta / (1.0 - beta), n_p)
            t0 = np.repeat(all_pulses, k)
            m = len(t0)
            delay = rng.exponential(params.xx_lifetime_ps * 1e-3, m)
            if line == "X":
                delay = delay + rng.exponential(params.t1_ps * 1e-3, m)
            su = rng.random((2, m))
            sdet = rng.random(m) < det.efficiency
            st = t0 + delay + det.jitter_sigma_ns * rng.standard_normal(m)
        else:
            st = np.zeros(0)
            su = np.zeros((2, 0))
            sdet = np.zeros(0, dtype=bool)
        stray[line] = (st, su[0], su[1], sdet)
    return out, stray


def simulate_stream(
    params: CascadeParams,
    clock: ExperimentClock,
    det: DetectorModel,
    seed: int,
    workers: int = 1,
) -> PhotonStream:
    """Generate the emission/detection record of ``clock.n_cycles`` excitation cycles."""
    if params.background_fraction >= 1.0:
        raise ValueError("background_fraction must be < 1 for event-level simulation")
    blocks = [(b, c0, min(BLOCK_CYCLES, clock.n_cycles - c0)) for b, c0 in
              enumerate(range(0, clock.n_cycles, BLOCK_CYCLES))]

    def run(blk):
        return _simulate_block(params, clock, det, seed, *blk)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(blk) for blk in blocks]

    cols = {key: np.concatenate([r[0][key] for r in results]) for key in results[0][0]}
    stray = {}
    for line in LINES:
        parts = [r[1][line] for r in results]
        st, up, ur, sd = (np.concatenate([p[i] for p in parts]) for i in range(4))
        order = np.argsort(st, kind="stable")
        stray[line] = StrayPhotons(st[order], up[order], ur[order], sd[order])

    duration = clock.n_cycles * clock.rep_period_ns
    dark = {}
    for line in LINES:
        for d in (0, 1):
            rng = substream(seed, "dark", line, d)
            k = rng.poisson(det.dark_rate_hz * duration * 1e-9) if det.dark_rate_hz > 0 else 0
            dark[(line, d)] = np.sort(rng.uniform(0.0, duration, k))
    return PhotonStream(params, clock, det, seed, stray=stray, dark=dark, **cols)


# -- pair histograms -------------------------------------------------------------

def delay_histogram(t_start: np.ndarray, t_stop: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Histogram of all pairwise delays ``t_stop - t_start`` that fall within the edges."""
    t_start = np.sort(np.asarray(t_start, dtype=float))
    t_stop = np.sort(np.asarray(t_stop, dtype=float))
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    if len(t_start) == 0 or len(t_stop) == 0:
        return counts
    lo = np.searchsorted(t_stop, t_start + edges[0], side="left")
    hi = np.searchsorted(t_stop, t_start + edges[-1], side="right")
    n_pairs = hi - lo
    cum = np.cumsum(n_pairs)
    start = 0
    while start < len(t_start):
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + PAIR_CHUNK, side="right"))
        stop = max(stop, start + 1)
        cnt = n_pairs[start:stop]
        total = int(cnt.sum())
        if total:
            owner = np.repeat(np.arange(start, stop), cnt)
            offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            delays = t_stop[lo[owner] + offs] - t_start[owner]
            counts += np.histogram(delays, bins=edges)[0]
        start = stop
    return counts


def _line_photons(stream: PhotonStream, line: str):
    """Detected QD and stray photons of a line: (times, route uniforms)."""
    if line not in LINES:
        raise ValueError(f"line must be 'XX' or 'X', got {line!r}")
    if line == "XX":
        sel = stream.xx_detected
        t, ur = stream.xx_det_ns[sel], stream.u_xx_route[sel]
    else:
        sel = stream.x_detected
        t, ur = stream.x_det_ns[sel], stream.u_x_route[sel]
    s = stream.stray[line]
    return np.concatenate([t, s.time_ns[s.detected]]), np.concatenate([ur, s.u_route[s.detected]])


def g2_auto(stream: PhotonStream, line: str, hist: HistSpec = HistSpec()) -> CoincidenceHistogram:
    """Hanbury Brown-Twiss histogram of one line split 50:50 onto two detectors."""
    t, ur = _line_photons(stream, line)
    if len(t) == 0 and all(len(stream.dark[(line, d)]) == 0 for d in (0, 1)):
        raise ValueError("stream contains no detections on this line")
    t0 = np.concatenate([t[ur < 0.5], stream.dark[(line, 0)]])
    t1 = np.concatenate([t[ur >= 0.5], stream.dark[(line, 1)]])
    edges = hist.edges
    return CoincidenceHistogram(edges, delay_histogram(t0, t1, edges), len(t0))


def g2_zero(h: CoincidenceHistogram, period_ns: float = 12.5, window_ns: float = 1.0) -> float:
    """Zero-delay peak area over the mean area of the peaks one period away."""
    side = 0.5 * (peak_area(h, -period_ns, window_ns) + peak_area(h, period_ns, window_ns))
    if side == 0:
        raise ZeroDivisionError("no coincidences in the side peaks")
    return peak_area(h, 0.0, window_ns) / side


def _pass_analyzers(stream: PhotonStream, setting: MeasurementSetting):
    """Per-event booleans (XX passes, X passes) for the given analyzer pair."""
    a, b = setting.xx_ket, setting.x_ket
    amp = (np.conj(a[0]) * np.conj(b[0]) + np.exp(1j * stream.phase) * np.conj(a[1]) * np.conj(b[1])) / math.sqrt(2.0)
    p_joint = np.abs(amp) ** 2
    xx_pass = stream.u_xx_pol < 0.5
    cond = np.where(xx_pass, 2.0 * p_joint, 1.0 - 2.0 * p_joint)
    cond = np.where(stream.flipped, 0.5, cond)
    x_pass = stream.u_x_pol < cond
    return xx_pass, x_pass


def cross_correlation(stream: PhotonStream, setting: MeasurementSetting, hist: HistSpec = HistSpec()) -> CoincidenceHistogram:
    """Histogram of ``t_X - t_XX`` behind the setting's XX-arm and X-arm analyzers."""
    if isinstance(setting, str):
        setting = MeasurementSetting(setting)
    xx_pass, x_pass = _pass_analyzers(stream, setting)
    t_xx = stream.xx_det_ns[xx_pass & stream.xx_detected]
    t_x = stream.x_det_ns[x_pass & stream.x_detected]
    sx, sxx = stream.stray["X"], stream.stray["XX"]
    t_xx = np.concatenate([t_xx, sxx.time_ns[sxx.detected & (sxx.u_pol < 0.5)], stream.dark[("XX", 0)]])
    t_x = np.concatenate([t_x, sx.time_ns[sx.detected & (sx.u_pol < 0.5)], stream.dark[("X", 0)]])
    edges = hist.edges
    return CoincidenceHistogram(edges, delay_histogram(t_xx, t_x, edges), len(t_xx))


def hom_simulate(
    stream: PhotonStream,
    bs: BeamSplitterModel,
    v_in: float,
    polarization: str,
    hist: HistSpec = HistSpec(),
    seed: int = 0,
    *,
    line: str = "XX",
    mz_delay_ns: float | None = None,
) -> CoincidenceHistogram:
    """Two-photon interference of consecutive photons through an unbalanced Mach-Zehnder.

    Each photon takes the short or long arm with probability 1/2.  The early
    photon in the long arm and the late photon in the short arm meet at the
    output splitter; for that pair the split probability is lowered from
    ``R^2 + T^2`` to ``R^2 + T^2 - 2 R T M`` with
    ``M = (1 - eps)^2 * V_in * exp(-|mz_delay - pulse_sep| / T1)`` for
    co-polarized inputs and ``M = 0`` for cross-polarized inputs.  All other
    photons are routed independently.  Returns the histogram of
    ``t_d - t_c`` between the two output detectors.
    """
    if not stream.clock.double_pulse:
        raise ValueError("interference needs the double-pulse excitation clock")
    if not 0.0 <= v_in <= 1.0:
        raise ValueError("v_in must lie in [0, 1]")
    if polarization not in ("co", "cross"):
        raise ValueError("polarization must be 'co' or 'cross'")
    sep = stream.clock.pulse_pair_sep_ns
    delay = sep if mz_delay_ns is None else mz_delay_ns
    lifetime_ns = (stream.params.xx_lifetime_ps if line == "XX" else stream.params.t1_ps) * 1e-3
    r, tt = bs.reflectance, bs.transmittance
    m = 0.0
    if polarization == "co":
        m = bs.mode_overlap ** 2 * v_in * math.exp(-abs(delay - sep) / lifetime_ns)

    if line == "XX":
        t, det = stream.xx_det_ns, stream.xx_detected
    elif line == "X":
        t, det = stream.x_det_ns, stream.x_detected
    else:
        raise ValueError(f"line must be 'XX' or 'X', got {line!r}")
    s = stream.stray[line]
    times = np.concatenate([t, s.time_ns])
    detected = np.concatenate([det, s.detected])
    n = len(times)

    rng = substream(seed, "hom", polarization, line)
    long_arm = rng.random(n) < 0.5
    # Port a (short arm) reflects to c; port b (long arm) reflects to d.
    reflect = rng.random(n) < r
    to_c = np.where(long_arm, ~reflect, reflect)

    # Collision pairs: same cycle, early photon long, late photon short.
    cyc, pul = stream.cycle, stream.pulse
    early = np.flatnonzero((pul[:-1] == 0) & (pul[1:] == 1) & (cyc[:-1] == cyc[1:]))
    late = early + 1
    hit = long_arm[early] & ~long_arm[late]
    e_idx, l_idx = early[hit], late[hit]
    if len(e_idx) and m > 0:
        u = rng.random(len(e_idx))
        p_split = r * r + tt * tt - 2.0 * r * tt * m
        p_both_c = r * tt * (1.0 + m)
        split = u < p_split
        both_c = (u >= p_split) & (u < p_split + p_both_c)
        # Early photon enters port b, late photon port a.  A split is either
        # both reflected (early -> d, late -> c) or both transmitted.
        both_reflect = rng.random(len(e_idx)) < r * r / (r * r + tt * tt)
        to_c[e_idx] = np.where(split, ~both_reflect, both_c)
        to_c[l_idx] = np.where(split, both_reflect, both_c)

    arrive = times + np.where(long_arm, delay, 0.0)
    keep = detected
    tc = np.concatenate([arrive[keep & to_c], stream.dark[(line, 0)]])
    td = np.concatenate([arrive[keep & ~to_c], stream.dark[(line, 1)]])
    edges = hist.edges
    return CoincidenceHistogram(edges, delay_histogram(tc, td, edges), len(tc))


def expected_hom_peak_ratio(bs: BeamSplitterModel, v_in: float, polarization: str) -> float:
    """Closed-form zero-delay area over the mean +/-separation area."""
    r, t = bs.reflectance, bs.transmittance
    m = bs.mode_overlap ** 2 * v_in if polarization == "co" else 0.0
    return (r * r + t * t - 2.0 * r * t * m) / (2.0 * r * t)


def central_window_ns(clock: ExperimentClock) -> float:
    """Half the smallest spacing between coincidence peaks for this clock.

    With one pulse per period this integrates the whole zero-delay peak (no
    temporal filtering); with pulse pairs it is half the pair separation.
    """
    if clock.double_pulse:
        return 0.5 * min(clock.pulse_pair_sep_ns, clock.rep_period_ns - clock.pulse_pair_sep_ns)
    return 0.5 * clock.rep_period_ns


def tomography_counts_from_events(
    params: CascadeParams,
    clock: ExperimentClock,
    det: DetectorModel,
    seed: int,
    settings=None,
    window_ns: float | None = None,
    hist: HistSpec = HistSpec(),
) -> TomographyCounts:
    """Central-peak coincidences for each setting, each from its own simulated stream."""
    settings = canonical_settings() if settings is None else tuple(settings)
    if window_ns is None:
        window_ns = central_window_ns(clock)
    counts = []
    for s in settings:
        stream = simulate_stream(params, clock, det, _setting_seed(seed, s.label))
        counts.append(peak_area(cross_correlation(stream, s, hist), 0.0, window_ns))
    return TomographyCounts(settings, np.array(counts))


def _setting_seed(seed: int, label: str) -> int:
    return child_seed(seed, "setting", label)
