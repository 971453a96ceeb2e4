"""Two-photon polarization primitives.

Every two-photon object in the package lives in the ordered product basis
``(HH, HV, VH, VV)``, where the left factor is the biexciton (XX) photon and
the right factor is the exciton (X) photon.  Kets and operators are plain
``numpy`` complex arrays; the helpers here build, check and decompose them.
"""
from __future__ import annotations

import math

import numpy as np

BASIS_ORDER = ("HH", "HV", "VH", "VV")
BASIS_TAG = ",".join(BASIS_ORDER)

# Validator tolerances shared by every module that hands out a density matrix.
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-9

JACOBI_MAX_SWEEPS = 200
JACOBI_TOL = 1e-12


class DensityMatrixError(ValueError):
    """Raised when a matrix fails the density-matrix invariants."""


class EigenConvergenceError(ArithmeticError):
    def __init__(self, residual: float, sweeps: int):
        super().__init__(
            f"Jacobi eigensolver did not converge after {sweeps} sweeps "
            f"(off-diagonal norm {residual:.3e})"
        )
        self.residual = residual
        self.sweeps = sweeps


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def ket2(h: complex, v: complex) -> np.ndarray:
    """Normalized single-photon polarization ket in the (H, V) basis."""
    k = np.array([h, v], dtype=complex)
    n = np.linalg.norm(k)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError("polarization ket must have finite, non-zero norm")
    return k / n


def ket4(amplitudes) -> np.ndarray:
    """Normalized two-photon ket with amplitudes ordered (HH, HV, VH, VV)."""
    k = np.asarray(amplitudes, dtype=complex).reshape(4)
    n = np.linalg.norm(k)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError("two-photon ket must have finite, non-zero norm")
    return k / n


_S2 = 1.0 / math.sqrt(2.0)

H = _frozen(np.array([1.0, 0.0], dtype=complex))
V = _frozen(np.array([0.0, 1.0], dtype=complex))
D = _frozen(np.array([_S2, _S2], dtype=complex))
A = _frozen(np.array([_S2, -_S2], dtype=complex))
# Circular handedness is a fixed convention: R = (H - iV)/sqrt(2).
R = _frozen(np.array([_S2, -1j * _S2], dtype=complex))
L = _frozen(np.array([_S2, 1j * _S2], dtype=complex))

_KETS = {"H": H, "V": V, "D": D, "A": A, "R": R, "L": L}
ORTHOGONAL = {"H": "V", "V": "H", "D": "A", "A": "D", "R": "L", "L": "R"}

PSI_PLUS = _frozen(np.array([_S2, 0.0, 0.0, _S2], dtype=complex))

I2 = _frozen(np.eye(2, dtype=complex))
I4 = _frozen(np.eye(4, dtype=complex))
SIGMA_X = _frozen(np.array([[0, 1], [1, 0]], dtype=complex))
SIGMA_Y = _frozen(np.array([[0, -1j], [1j, 0]], dtype=complex))
SIGMA_Z = _frozen(np.array([[1, 0], [0, -1]], dtype=complex))


def standard_kets() -> dict[str, np.ndarray]:
    """The six polarization kets H, V, D, A, R, L."""
    return dict(_KETS)


def polarization(label: str) -> np.ndarray:
    try:
        return _KETS[label]
    except KeyError:
        raise ValueError(f"unknown polarization label {label!r}; expected one of HVDARL") from None


def projector(k: np.ndarray) -> np.ndarray:
    """Rank-one projector |k><k| for a (normalized on the fly) ket."""
    k = np.asarray(k, dtype=complex)
    k = k / np.linalg.norm(k)
    return np.outer(k, k.conj())


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with the XX-photon operator ``a`` as left factor."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def dm_from_ket(k: np.ndarray) -> np.ndarray:
    k = ket4(k)
    return np.outer(k, k.conj())


def maximally_mixed() -> np.ndarray:
    return np.eye(4, dtype=complex) / 4.0


SPIN_FLIP = _frozen(tensor(SIGMA_Y, SIGMA_Y))


def validate_density_matrix(m, name: str = "rho") -> np.ndarray:
    """Check the density-matrix invariants and return a complex copy.

    Hermiticity and unit trace are checked entrywise to 1e-10, positivity
    to -1e-9 on the smallest eigenvalue.
    """
    rho = np.array(m, dtype=complex)
    if rho.shape != (4, 4):
        raise DensityMatrixError(f"{name}: expected a 4x4 matrix, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise DensityMatrixError(f"{name}: contains non-finite entries")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > HERMITIAN_TOL:
        raise DensityMatrixError(f"{name}: not Hermitian (max |rho - rho^H| = {herm:.3e})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise DensityMatrixError(f"{name}: trace {tr!r} differs from 1")
    lam_min = eig_hermitian(rho)[0][-1]
    if lam_min < -POSITIVITY_TOL:
        raise DensityMatrixError(f"{name}: not positive semidefinite (min eigenvalue {lam_min:.3e})")
    return rho


def _jacobi(a: np.ndarray, tol: float, max_sweeps: int):
    """Cyclic complex Jacobi sweeps on a Hermitian matrix of any small size."""
    a = np.array(a, dtype=complex)
    a = 0.5 * (a + a.conj().T)
    n = a.shape[0]
    vecs = np.eye(n, dtype=complex)
    scale = max(1.0, float(np.linalg.norm(a)))

    mask = ~np.eye(n, dtype=bool)

    def off_norm(x):
        return float(np.linalg.norm(x[mask]))

    for sweep in range(max_sweeps + 1):
        off = off_norm(a)
        if off <= tol * scale:
            return np.diag(a).real.copy(), vecs, sweep
        if sweep == max_sweeps:
            raise EigenConvergenceError(off, sweep)
        for p in range(n - 1):
            for q in range(p + 1, n):
                b = a[p, q]
                mag = abs(b)
                if mag <= 1e-18 * scale:
                    a[p, q] = a[q, p] = 0.0
                    continue
                phase = b / mag
                theta = 0.5 * math.atan2(-2.0 * mag, a[q, q].real - a[p, p].real)
                c, s = math.cos(theta), math.sin(theta)
                # Phase the (p, q) element real, then a real plane rotation.
                g = np.array([[c, -s], [s * phase.conjugate(), c * phase.conjugate()]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ g
                a[idx, :] = g.conj().T @ a[idx, :]
                vecs[:, idx] = vecs[:, idx] @ g
                a[p, q] = a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
    raise AssertionError("unreachable")


def eig_hermitian(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a 4x4 Hermitian matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, vectors)`` with eigenvalues in descending order and
    the matching orthonormal eigenvectors as the *columns* of ``vectors``.
    Raises :class:`EigenConvergenceError` if 200 sweeps do not bring the
    off-diagonal norm below 1e-12.
    """
    m = np.asarray(m, dtype=complex)
    if m.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(m)))):
        raise ValueError("matrix is not Hermitian")
    vals, vecs, _ = _jacobi(m, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    order = np.argsort(-vals, kind="stable")
    return vals[order], vecs[:, order]


def hermitian_dilation_singular_values(t: np.ndarray) -> np.ndarray:
    """Singular values of a square matrix, descending, without squaring.

    Uses the eigenvalues of ``[[0, t], [t^H, 0]]`` which are ``+/-`` the
    singular values, so small singular values keep full absolute precision.
    """
    t = np.asarray(t, dtype=complex)
    n = t.shape[0]
    big = np.zeros((2 * n, 2 * n), dtype=complex)
    big[:n, n:] = t
    big[n:, :n] = t.conj().T
    vals, _, _ = _jacobi(big, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    return np.sort(vals)[::-1][:n]


def trace_distance(rho, sigma) -> float:
    """Half the sum of absolute eigenvalues of ``rho - sigma``."""
    vals, _ = eig_hermitian(np.asarray(rho, dtype=complex) - np.asarray(sigma, dtype=complex))
    return 0.5 * float(np.sum(np.abs(vals)))


def project_to_physical(m, floor: float = 1e-6) -> np.ndarray:
    """Hermitize, clip eigenvalues below ``floor`` and renormalize to unit trace."""
    m = np.asarray(m, dtype=complex)
    m = 0.5 * (m + m.conj().T)
    vals, vecs = eig_hermitian(m / np.trace(m).real)
    vals = np.clip(vals, floor, None)
    vals = vals / vals.sum()
    rho = (vecs * vals) @ vecs.conj().T
    return 0.5 * (rho + rho.conj().T)


# -- serialization -----------------------------------------------------------

def dumps_density_matrix(rho, header: dict | None = None) -> str:
    """Text form: ``# key: value`` header comments, the basis tag, 4 rows of re,im pairs."""
    rho = np.asarray(rho, dtype=complex)
    lines = []
    for key, value in (header or {}).items():
        lines.append(f"# {key}: {value}")
    lines.append(f"basis: {BASIS_TAG}")
    for row in rho:
        lines.append(" ".join(f"{z.real:.17g},{z.imag:.17g}" for z in row))
    return "\n".join(lines) + "\n"


def loads_density_matrix(text: str) -> tuple[np.ndarray, dict[str, str]]:
    header: dict[str, str] = {}
    rows = []
    basis = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                header[key.strip()] = value.strip()
            continue
        if line.startswith("basis:"):
            basis = line.split(":", 1)[1].strip()
            continue
        try:
            pairs = [p.split(",") for p in line.split()]
            rows.append([complex(float(re), float(im)) for re, im in pairs])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: malformed matrix row: {raw!r}") from exc
    if basis != BASIS_TAG:
        raise ValueError(f"unsupported basis tag {basis!r}; expected {BASIS_TAG!r}")
    rho = np.array(rows, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"expected 4 rows of 4 entries, got shape {rho.shape}")
    return rho, header
