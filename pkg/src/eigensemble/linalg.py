"""Small dense complex linear algebra.

Kets are 1-D ``complex128`` arrays and operators are square 2-D ``complex128``
arrays.  Everything here is a pure function; returned arrays are fresh.

``hermitian_eig`` and ``jacobi_svd`` are self-contained cyclic Jacobi
routines.  They deliberately avoid LAPACK so that they can serve as an
independent check on the closed-form results elsewhere in the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError

MAX_DIM = 4096
NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-10

SWEEP_BUDGET = 100
OFF_DIAGONAL_TOL = 1e-14


# ---------------------------------------------------------------------------
# coercion / validation
# ---------------------------------------------------------------------------

def as_ket(v, name: str = "ket") -> np.ndarray:
    """Coerce ``v`` to a finite 1-D complex array."""
    arr = np.asarray(v, dtype=np.complex128)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name}: expected a non-empty 1-D vector, got shape {arr.shape}")
    if arr.size > MAX_DIM:
        raise ValidationError(f"{name}: dimension {arr.size} exceeds {MAX_DIM}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: non-finite component")
    return arr


def as_operator(m, name: str = "operator") -> np.ndarray:
    """Coerce ``m`` to a finite square complex matrix."""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ValidationError(f"{name}: expected a non-empty square matrix, got shape {arr.shape}")
    if arr.shape[0] > MAX_DIM:
        raise ValidationError(f"{name}: dimension {arr.shape[0]} exceeds {MAX_DIM}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: non-finite entry")
    return arr


def _same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise ValidationError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


def is_normalized(v, tol: float = NORM_TOL) -> bool:
    v = as_ket(v)
    return abs(np.vdot(v, v).real - 1.0) <= tol


def require_normalized(v, name: str = "ket", tol: float = NORM_TOL) -> np.ndarray:
    v = as_ket(v, name)
    norm2 = np.vdot(v, v).real
    if norm2 == 0.0:
        raise ValidationError(f"{name}: zero vector")
    if abs(norm2 - 1.0) > tol:
        raise ValidationError(f"{name}: not normalized (<v|v> = {norm2!r})")
    return v


def hermiticity_error(m) -> float:
    m = as_operator(m)
    return float(np.max(np.abs(m - m.conj().T)))


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    return hermiticity_error(m) <= tol


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def inner(bra, ket) -> complex:
    """<bra|ket>, conjugate-linear in the first argument."""
    bra, ket = as_ket(bra, "bra"), as_ket(ket, "ket")
    _same_dim(bra, ket)
    return complex(np.vdot(bra, ket))


def outer(ket, bra) -> np.ndarray:
    """|ket><bra|; entry (i, j) is ``ket[i] * conj(bra[j])``."""
    ket, bra = as_ket(ket, "ket"), as_ket(bra, "bra")
    _same_dim(ket, bra)
    return np.outer(ket, bra.conj())


def norm(v) -> float:
    v = as_ket(v)
    return float(np.sqrt(np.vdot(v, v).real))


def normalize(v) -> np.ndarray:
    v = as_ket(v)
    n = norm(v)
    if n == 0.0:
        raise ValidationError("cannot normalize the zero vector")
    return v / n


def identity(dim: int) -> np.ndarray:
    if dim < 1 or dim > MAX_DIM:
        raise ValidationError(f"identity: dimension {dim} out of range")
    return np.eye(dim, dtype=np.complex128)


def add(a, b) -> np.ndarray:
    a, b = as_operator(a, "a"), as_operator(b, "b")
    _same_dim(a, b)
    return a + b


def scale(s: complex, m) -> np.ndarray:
    return complex(s) * as_operator(m)


def multiply(a, b) -> np.ndarray:
    a, b = as_operator(a, "a"), as_operator(b, "b")
    _same_dim(a, b)
    return a @ b


def adjoint(m) -> np.ndarray:
    return as_operator(m).conj().T.copy()


def trace(m) -> complex:
    return complex(np.trace(as_operator(m)))


def apply(m, v) -> np.ndarray:
    m, v = as_operator(m), as_ket(v)
    _same_dim(m, v)
    return m @ v


def frobenius_norm(m) -> float:
    return float(np.linalg.norm(as_operator(m), "fro"))


def commutator(a, b) -> np.ndarray:
    a, b = as_operator(a, "a"), as_operator(b, "b")
    _same_dim(a, b)
    return a @ b - b @ a


# ---------------------------------------------------------------------------
# Jacobi eigensolver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HermitianEigenResult:
    """Eigenvalues (descending) and matching orthonormal eigenvectors.

    ``eigenvectors[k]`` is the eigenvector for ``eigenvalues[k]``;
    ``residual`` is ``max_k ||M v_k - lambda_k v_k||``.
    """

    eigenvalues: np.ndarray
    eigenvectors: tuple
    residual: float
    sweeps: int

    def as_matrix(self) -> np.ndarray:
        """Eigenvectors stacked as columns."""
        return np.column_stack(self.eigenvectors)


def _rotation(a: float, b: float, z: complex):
    """Unitary 2x2 rotation diagonalizing [[a, z], [conj(z), b]].

    Returns ``(c, s)`` so that ``G = [[c, s], [-conj(s), c]]`` satisfies
    ``G^H [[a, z], [conj(z), b]] G`` diagonal, with the smaller-angle choice.
    """
    az = abs(z)
    phase = z / az
    theta = (b - a) / (2.0 * az)
    if abs(theta) > 1e150:
        t = 0.5 / theta
    else:
        t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
        if theta < 0.0:
            t = -t
    c = 1.0 / np.sqrt(t * t + 1.0)
    return c, t * c * phase


def _off_norm(a: np.ndarray) -> float:
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def hermitian_eig(m, tol: float = OFF_DIAGONAL_TOL, max_sweeps: int = SWEEP_BUDGET) -> HermitianEigenResult:
    """Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi.

    Parameters
    ----------
    m : array_like
        Hermitian matrix (within ``1e-10``).
    tol : float
        Sweeps stop once the off-diagonal Frobenius mass falls to
        ``tol * max(1, ||m||_F)``.
    max_sweeps : int
        Sweep budget; exceeding it raises :class:`NumericalError`.
    """
    a = as_operator(m, "matrix")
    if hermiticity_error(a) > HERMITIAN_TOL:
        raise ValidationError("hermitian_eig: matrix is not Hermitian")
    n = a.shape[0]
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=np.complex128)
    threshold = tol * max(1.0, float(np.linalg.norm(a)))

    sweeps = 0
    while _off_norm(a) > threshold:
        if sweeps >= max_sweeps:
            raise NumericalError(f"hermitian_eig: no convergence after {max_sweeps} sweeps")
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                z = a[p, q]
                if abs(z) <= 1e-300:
                    continue
                c, s = _rotation(a[p, p].real, a[q, q].real, z)
                sc = s.conjugate()
                # columns: A <- A G
                col_p = a[:, p].copy()
                a[:, p] = c * col_p - sc * a[:, q]
                a[:, q] = s * col_p + c * a[:, q]
                # rows: A <- G^H A
                row_p = a[p, :].copy()
                a[p, :] = c * row_p - s * a[q, :]
                a[q, :] = sc * row_p + c * a[q, :]
                a[p, q] = a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                vp = v[:, p].copy()
                v[:, p] = c * vp - sc * v[:, q]
                v[:, q] = s * vp + c * v[:, q]

    evals = np.diag(a).real.copy()
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    v = v[:, order]
    m0 = as_operator(m)
    residual = float(np.max(np.linalg.norm(m0 @ v - v * evals, axis=0))) if n else 0.0
    return HermitianEigenResult(evals, tuple(v[:, k].copy() for k in range(n)), residual, sweeps)


def jacobi_svd(a, tol: float = 1e-15, max_sweeps: int = SWEEP_BUDGET):
    """Thin singular-value decomposition by one-sided (Hestenes) Jacobi.

    Returns ``(u, s, vh)`` with ``a = u @ diag(s) @ vh``; singular values
    are descending and only the numerically nonzero ones are kept, so the
    columns of ``u`` and the rows of ``vh`` are orthonormal.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.size == 0:
        raise ValidationError(f"jacobi_svd: expected a non-empty matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("jacobi_svd: non-finite entry")
    rows, cols = a.shape
    if cols > rows:
        u, s, vh = jacobi_svd(a.T, tol, max_sweeps)
        return vh.T, s, u.T

    g = a.copy()
    v = np.eye(cols, dtype=np.complex128)
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                alpha = np.vdot(g[:, p], g[:, p]).real
                beta = np.vdot(g[:, q], g[:, q]).real
                gamma = np.vdot(g[:, p], g[:, q])
                if abs(gamma) <= tol * np.sqrt(alpha * beta) or abs(gamma) <= 1e-300:
                    continue
                rotated = True
                c, s = _rotation(alpha, beta, gamma)
                sc = s.conjugate()
                gp = g[:, p].copy()
                g[:, p] = c * gp - sc * g[:, q]
                g[:, q] = s * gp + c * g[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - sc * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
        if not rotated:
            break
    else:
        raise NumericalError(f"jacobi_svd: no convergence after {max_sweeps} sweeps")

    sing = np.linalg.norm(g, axis=0)
    order = np.argsort(-sing, kind="stable")
    sing = sing[order]
    keep = sing > sing[0] * 1e-13
    idx = order[keep]
    s = sing[keep]
    u = g[:, idx] / s
    vh = v[:, idx].conj().T
    return u, s, vh


# ---------------------------------------------------------------------------
# random draws
# ---------------------------------------------------------------------------

def random_ket(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unit vector (normalized complex Gaussian)."""
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return z / np.linalg.norm(z)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary: QR of a complex Gaussian with R's diagonal phases removed."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (z + z.conj().T)


def principal_angle(u, v) -> float:
    """Angle between the rays spanned by unit vectors ``u`` and ``v``.

    Computed as ``atan2(||v - <u|v> u||, |<u|v>|)`` which stays accurate
    for tiny angles.
    """
    u, v = as_ket(u, "u"), as_ket(v, "v")
    _same_dim(u, v)
    ov = np.vdot(u, v)
    perp = np.linalg.norm(v - ov * u)
    return float(np.arctan2(perp, abs(ov)))
