"""Time-integrated polarization state of the biexciton-exciton cascade.

While the exciton waits to decay, a fine-structure splitting ``S`` winds the
phase between the HH and VV amplitudes at rate ``S / hbar``.  Averaging over
the exponential exciton dwell time with lifetime ``T1`` gives the coherence

    rho[VV, HH] = 1/2 * 1 / (1 - i x),    x = S * T1 / hbar.

A static random nuclear (Overhauser) field is folded in as a Gaussian spread
of the effective splitting, after which two incoherent channels act: an
exciton spin-flip that randomizes the X-photon polarization, and an
unpolarized background admixture.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import wofz

from .metrics import VisibilityTriple, concurrence, fidelity_to_psi_plus
from .qcore import PSI_PLUS, ket4, polarization, validate_density_matrix
from .rng import substream

HBAR_UEV_NS = 0.6582119
HBAR_UEV_PS = HBAR_UEV_NS * 1e3

MC_BLOCK = 1 << 16


class ParameterError(ValueError):
    """Invalid physical parameter; ``field`` names the offending one."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class CascadeParams:
    fss_ueV: float = 0.0
    t1_ps: float = 250.0
    overhauser_sigma_ueV: float = 0.0
    spin_flip_prob: float = 0.0
    background_fraction: float = 0.0
    # Biexciton lifetime; None means T1 / 2.
    t1_xx_ps: float | None = None

    def __post_init__(self):
        errors = self.errors()
        if errors:
            raise errors[0]

    def errors(self) -> list[ParameterError]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                out.append(ParameterError(f.name, f"must be a finite number, got {value!r}"))
        if out:
            return out
        if not self.t1_ps > 0:
            out.append(ParameterError("t1_ps", f"exciton lifetime must be > 0, got {self.t1_ps}"))
        if self.t1_xx_ps is not None and not self.t1_xx_ps > 0:
            out.append(ParameterError("t1_xx_ps", f"biexciton lifetime must be > 0, got {self.t1_xx_ps}"))
        if self.fss_ueV < 0:
            out.append(ParameterError("fss_ueV", f"must be >= 0, got {self.fss_ueV}"))
        if self.overhauser_sigma_ueV < 0:
            out.append(ParameterError("overhauser_sigma_ueV", f"must be >= 0, got {self.overhauser_sigma_ueV}"))
        for name in ("spin_flip_prob", "background_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                out.append(ParameterError(name, f"must lie in [0, 1], got {value}"))
        return out

    @property
    def xx_lifetime_ps(self) -> float:
        return self.t1_ps / 2.0 if self.t1_xx_ps is None else self.t1_xx_ps


def precession_parameter(fss_ueV: float, t1_ps: float) -> float:
    """x = S * T1 / hbar, dimensionless."""
    return fss_ueV * t1_ps / HBAR_UEV_PS


def instantaneous_state(params: CascadeParams, t_ps: float) -> np.ndarray:
    """(|HH> + exp(i S t / hbar) |VV>) / sqrt(2) after an exciton dwell ``t_ps``."""
    if t_ps < 0:
        raise ValueError(f"t_ps must be >= 0, got {t_ps}")
    phi = params.fss_ueV * t_ps / HBAR_UEV_PS
    return ket4([1.0, 0.0, 0.0, complex(math.cos(phi), math.sin(phi))])


def integrated_coherence(x: float, sigma_x: float = 0.0) -> complex:
    """E[1 / (1 - i x')] for x' ~ Normal(x, sigma_x).

    For ``sigma_x > 0`` the exponential-time and Gaussian averages combine to
    ``sqrt(pi/2)/sigma * w((x + i) / (sqrt(2) sigma))`` with ``w`` the
    Faddeeva function.
    """
    if sigma_x < 0:
        raise ValueError("sigma_x must be >= 0")
    if sigma_x < 1e-4:
        # Second-order expansion; the fourth-order term is below 1e-15.
        f = 1.0 / complex(1.0, -x)
        return f - sigma_x * sigma_x * f ** 3
    z = complex(x, 1.0) / (math.sqrt(2.0) * sigma_x)
    return complex(math.sqrt(math.pi / 2.0) / sigma_x * wofz(z))


def _coherent_dm(coherence: complex) -> np.ndarray:
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = rho[3, 3] = 0.5
    rho[3, 0] = 0.5 * coherence
    rho[0, 3] = 0.5 * np.conj(coherence)
    return rho


def spin_flip_channel(rho: np.ndarray, p: float) -> np.ndarray:
    """With probability ``p`` the X photon leaves unpolarized and uncorrelated."""
    if p == 0.0:
        return rho
    r = rho.reshape(2, 2, 2, 2)
    rho_xx = np.einsum("ajbj->ab", r)
    scrambled = np.kron(rho_xx, np.eye(2) / 2.0)
    return (1.0 - p) * rho + p * scrambled


def background_channel(rho: np.ndarray, beta: float) -> np.ndarray:
    if beta == 0.0:
        return rho
    return (1.0 - beta) * rho + beta * np.eye(4, dtype=complex) / 4.0


def apply_noise_channels(rho: np.ndarray, params: CascadeParams) -> np.ndarray:
    rho = spin_flip_channel(rho, params.spin_flip_prob)
    return background_channel(rho, params.background_fraction)


def time_integrated_dm(params: CascadeParams) -> np.ndarray:
    """Density matrix seen by a time-integrating coincidence measurement."""
    x = precession_parameter(params.fss_ueV, params.t1_ps)
    sx = precession_parameter(params.overhauser_sigma_ueV, params.t1_ps)
    rho = _coherent_dm(integrated_coherence(x, sx))
    return validate_density_matrix(apply_noise_channels(rho, params), "time_integrated_dm")


def overhauser_average(params: CascadeParams, n_samples: int, seed: int) -> np.ndarray:
    """Monte Carlo average over static effective splittings S_eff ~ Normal(S, sigma_OH).

    Samples are drawn in fixed blocks of 65536, block ``b`` from the seed path
    ``("overhauser", b)``, so the result depends only on ``seed`` and
    ``n_samples``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    total = 0.0 + 0.0j
    for b, start in enumerate(range(0, n_samples, MC_BLOCK)):
        n = min(MC_BLOCK, n_samples - start)
        s_eff = params.fss_ueV + params.overhauser_sigma_ueV * substream(seed, "overhauser", b).standard_normal(n)
        x = s_eff * params.t1_ps / HBAR_UEV_PS
        total += np.sum(1.0 / (1.0 - 1j * x))
    rho = _coherent_dm(total / n_samples)
    return validate_density_matrix(apply_noise_channels(rho, params), "overhauser_average")


BASES = {"linear": ("H", "V"), "diagonal": ("D", "A"), "circular": ("R", "L")}


def joint_probability(rho: np.ndarray, xx_label: str, x_label: str) -> float:
    k = np.kron(polarization(xx_label), polarization(x_label))
    return float(np.real(k.conj() @ rho @ k))


def predicted_visibilities(rho) -> VisibilityTriple:
    rho = validate_density_matrix(rho)
    out = []
    for b1, b2 in BASES.values():
        co = joint_probability(rho, b1, b1) + joint_probability(rho, b2, b2)
        cross = joint_probability(rho, b1, b2) + joint_probability(rho, b2, b1)
        out.append((co - cross) / (co + cross))
    return VisibilityTriple(*out)


@dataclass(frozen=True)
class ScanRow:
    fss_ueV: float
    fidelity: float
    concurrence: float


def fss_fidelity_scan(template: CascadeParams, fss_grid) -> list[ScanRow]:
    rows = []
    for fss in fss_grid:
        if fss < 0:
            raise ValueError(f"FSS grid values must be >= 0, got {fss}")
        rho = time_integrated_dm(replace(template, fss_ueV=float(fss)))
        rows.append(ScanRow(float(fss), fidelity_to_psi_plus(rho), concurrence(rho)))
    return rows


def calibrate_overhauser_sigma(template: CascadeParams, target_fidelity: float, upper_ueV: float = 50.0) -> float:
    """Overhauser spread that brings the fidelity of ``template`` down to the target."""
    def gap(sigma):
        return fidelity_to_psi_plus(time_integrated_dm(replace(template, overhauser_sigma_ueV=sigma))) - target_fidelity

    if gap(0.0) < 0:
        raise ValueError(f"fidelity already below {target_fidelity} without Overhauser spread")
    return brentq(gap, 0.0, upper_ueV, xtol=1e-12)


def calibrate_background(template: CascadeParams, target_concurrence: float) -> float:
    """Background fraction that brings the concurrence of ``template`` to the target."""
    def gap(beta):
        return concurrence(time_integrated_dm(replace(template, background_fraction=beta))) - target_concurrence

    if gap(0.0) < 0:
        raise ValueError(f"concurrence already below {target_concurrence} without background")
    return brentq(gap, 0.0, 1.0, xtol=1e-12)


def bell_state_dm() -> np.ndarray:
    return np.outer(PSI_PLUS, PSI_PLUS.conj())
