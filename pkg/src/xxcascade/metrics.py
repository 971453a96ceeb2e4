"""Entanglement figures of merit for two-photon polarization states."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qcore import (
    PSI_PLUS,
    SPIN_FLIP,
    eig_hermitian,
    hermitian_dilation_singular_values,
    validate_density_matrix,
)

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class VisibilityTriple:
    c_linear: float
    c_diagonal: float
    c_circular: float

    def __post_init__(self):
        for name in ("c_linear", "c_diagonal", "c_circular"):
            value = getattr(self, name)
            if not (-1.0 - 1e-12 <= value <= 1.0 + 1e-12):
                raise ValueError(f"{name}={value} outside [-1, 1]")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.c_linear, self.c_diagonal, self.c_circular)


@dataclass(frozen=True)
class BellParameters:
    s_rc: float
    s_dc: float
    s_rd: float


@dataclass(frozen=True)
class DominantEigenstate:
    eigenvalue: float
    vector: np.ndarray
    alpha: float | None
    degenerate: bool
    # True when |v_HH| is too small for the VV/HH phase to mean anything.
    alpha_undefined: bool


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit density matrix.

    The lambdas are obtained as singular values of ``tau = W^T (Y x Y) W``
    where ``rho = W W^H`` comes from the eigendecomposition; these equal the
    square roots of the eigenvalues of ``rho (Y x Y) rho* (Y x Y)`` without
    ever taking a square root of a round-off sized eigenvalue of that product.
    """
    rho = validate_density_matrix(rho)
    vals, vecs = eig_hermitian(rho)
    w = vecs * np.sqrt(np.clip(vals, 0.0, None))
    tau = w.T @ SPIN_FLIP @ w
    lam = hermitian_dilation_singular_values(tau)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def fidelity_to_psi_plus(rho) -> float:
    rho = validate_density_matrix(rho)
    return float(np.real(PSI_PLUS.conj() @ rho @ PSI_PLUS))


def fidelity_from_visibilities(v: VisibilityTriple) -> float:
    """(1 + C_linear + C_diagonal - C_circular) / 4."""
    return (1.0 + v.c_linear + v.c_diagonal - v.c_circular) / 4.0


def bell_parameters(v: VisibilityTriple) -> BellParameters:
    return BellParameters(
        s_rc=SQRT2 * (v.c_linear - v.c_circular),
        s_dc=SQRT2 * (v.c_diagonal - v.c_circular),
        s_rd=SQRT2 * (v.c_linear + v.c_diagonal),
    )


def dominant_eigenstate(rho, gap_tol: float = 1e-9, amp_tol: float = 1e-6) -> DominantEigenstate:
    """Largest eigenpair and the VV/HH relative phase in units of pi.

    The global phase is fixed so that the HH amplitude is real and positive;
    ``alpha = arg(v_VV / v_HH) / pi`` is mapped into (-1, 1].  ``alpha`` is
    ``None`` when the top eigenvalue is degenerate or ``|v_HH| < amp_tol``.
    """
    rho = validate_density_matrix(rho)
    vals, vecs = eig_hermitian(rho)
    v = vecs[:, 0].copy()
    degenerate = bool(vals[0] - vals[1] < gap_tol)
    undefined = bool(abs(v[0]) < amp_tol)
    alpha = None
    if not undefined:
        v = v * (abs(v[0]) / v[0])
        if not degenerate:
            alpha = math.atan2(v[3].imag, v[3].real) / math.pi
            if alpha <= -1.0:
                alpha += 2.0
    return DominantEigenstate(float(vals[0]), v, alpha, degenerate, undefined)


def peak_area(hist, center_ns: float = 0.0, half_width_ns: float = 1.0) -> int:
    """Counts in bins whose centers fall inside ``center +/- half_width``."""
    centers = hist.bin_centers
    sel = np.abs(centers - center_ns) <= half_width_ns + 1e-12
    return int(np.sum(hist.counts[sel]))


def visibility_from_histograms(co, cross, window_ns: float = 1.0) -> float:
    """(A_co - A_cross) / (A_co + A_cross) from central-peak areas.

    "co" is the same-labelled setting on both arms (HH, DD, RR), so a
    |psi+> source gives a negative circular-basis value.
    """
    if not np.array_equal(co.bin_edges_ns, cross.bin_edges_ns):
        raise ValueError("co and cross histograms must share the same binning")
    a_co = peak_area(co, 0.0, window_ns)
    a_cross = peak_area(cross, 0.0, window_ns)
    if a_co + a_cross == 0:
        raise ZeroDivisionError("no coincidences inside the central-peak window")
    return (a_co - a_cross) / (a_co + a_cross)
