"""Excitation clock, detectors, beam splitter, and the coincidence histogram."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cascade import ParameterError

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def _check_finite(obj) -> list[ParameterError]:
    out = []
    for name, value in vars(obj).items():
        if isinstance(value, bool):
            continue
        if isinstance(value, (int, float)) and not math.isfinite(value):
            out.append(ParameterError(name, f"must be finite, got {value!r}"))
    return out


class _Validated:
    def __post_init__(self):
        errors = self.errors()
        if errors:
            raise errors[0]

    def errors(self) -> list[ParameterError]:
        raise NotImplementedError


@dataclass(frozen=True)
class ExperimentClock(_Validated):
    """Pulsed two-photon excitation.

    ``double_pulse`` excites twice per period, ``pulse_pair_sep_ns`` apart
    (the interference configuration); otherwise once per period.  The pulse
    area in units of pi and the Rabi damping (per radian of pulse area) set
    the pair-preparation probability.
    """

    rep_period_ns: float = 12.5
    pulse_pair_sep_ns: float = 2.0
    n_cycles: int = 10_000
    double_pulse: bool = True
    pulse_area_pi: float = 1.0
    rabi_damping: float = 0.0

    def errors(self):
        out = _check_finite(self)
        if out:
            return out
        if not self.pulse_pair_sep_ns > 0:
            out.append(ParameterError("pulse_pair_sep_ns", "must be > 0"))
        if not self.rep_period_ns > self.pulse_pair_sep_ns:
            out.append(ParameterError("rep_period_ns", "must exceed pulse_pair_sep_ns"))
        if not (isinstance(self.n_cycles, (int, np.integer)) and self.n_cycles >= 1):
            out.append(ParameterError("n_cycles", f"must be a positive integer, got {self.n_cycles!r}"))
        if self.pulse_area_pi < 0:
            out.append(ParameterError("pulse_area_pi", "must be >= 0"))
        if self.rabi_damping < 0:
            out.append(ParameterError("rabi_damping", "must be >= 0"))
        return out

    @property
    def pulses_per_cycle(self) -> int:
        return 2 if self.double_pulse else 1

    @property
    def preparation_probability(self) -> float:
        return rabi_population(self.pulse_area_pi * math.pi, self.rabi_damping)


def rabi_population(theta_rad, kappa: float):
    """Biexciton population after a pulse of area ``theta``: (1 - exp(-kappa theta) cos theta) / 2."""
    theta = np.asarray(theta_rad, dtype=float)
    out = 0.5 * (1.0 - np.exp(-kappa * theta) * np.cos(theta))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DetectorModel(_Validated):
    jitter_sigma_ns: float = 0.5 / FWHM_PER_SIGMA
    efficiency: float = 1.0
    dark_rate_hz: float = 0.0

    def errors(self):
        out = _check_finite(self)
        if out:
            return out
        if self.jitter_sigma_ns < 0:
            out.append(ParameterError("jitter_sigma_ns", "must be >= 0"))
        if not 0.0 < self.efficiency <= 1.0:
            out.append(ParameterError("efficiency", f"must lie in (0, 1], got {self.efficiency}"))
        if self.dark_rate_hz < 0:
            out.append(ParameterError("dark_rate_hz", "must be >= 0"))
        return out


@dataclass(frozen=True)
class BeamSplitterModel(_Validated):
    reflectance: float = 0.52
    transmittance: float = 0.48
    mode_overlap: float = 0.96

    def errors(self):
        out = _check_finite(self)
        if out:
            return out
        for name in ("reflectance", "transmittance", "mode_overlap"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                out.append(ParameterError(name, f"must lie in [0, 1], got {getattr(self, name)}"))
        if abs(self.reflectance + self.transmittance - 1.0) > 1e-9:
            out.append(ParameterError(
                "reflectance",
                f"R+T ≠ 1 (R={self.reflectance}, T={self.transmittance})",
            ))
        return out

    @property
    def correction_factor(self) -> float:
        """(R^2 + T^2) / (2 R T (1 - eps)^2); equals 1 for an ideal splitter."""
        r, t, ov = self.reflectance, self.transmittance, self.mode_overlap
        return (r * r + t * t) / (2.0 * r * t * ov * ov)


@dataclass(frozen=True)
class HistSpec:
    bin_width_ns: float = 0.05
    range_ns: float = 30.0

    def __post_init__(self):
        if not self.bin_width_ns > 0 or not self.range_ns > 0:
            raise ValueError("bin width and range must be > 0")

    @property
    def edges(self) -> np.ndarray:
        n = int(round(2 * self.range_ns / self.bin_width_ns))
        return np.linspace(-self.range_ns, self.range_ns, n + 1)


@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    bin_edges_ns: np.ndarray
    counts: np.ndarray
    n_start_events: int = 0

    def __post_init__(self):
        edges = np.asarray(self.bin_edges_ns, dtype=float)
        counts = np.asarray(self.counts)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if counts.shape != (len(edges) - 1,):
            raise ValueError("counts must have one entry per bin")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "bin_edges_ns", edges)
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges_ns[1:] + self.bin_edges_ns[:-1])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "CoincidenceHistogram") -> "CoincidenceHistogram":
        if not np.array_equal(self.bin_edges_ns, other.bin_edges_ns):
            raise ValueError("cannot merge histograms with different binning")
        return CoincidenceHistogram(
            self.bin_edges_ns, self.counts + other.counts, self.n_start_events + other.n_start_events
        )
