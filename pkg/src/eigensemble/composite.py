"""Bipartite pure states, partial traces, Schmidt form and entropies.

Composite kets use row-major indexing: component ``i * dim_b + j`` holds the
amplitude of ``|i>_A |j>_B``.  A pure bipartite state is stored as its
``dim_a x dim_b`` amplitude grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg as la
from .errors import ValidationError

NORM_TOL = 1e-12
DM_TOL = 1e-12
NEG_EIG_TOL = 1e-10
ZERO_EIG = 1e-14


def _readonly(arr) -> np.ndarray:
    arr = np.array(arr, dtype=np.complex128)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class BipartiteState:
    amplitudes: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.amplitudes, dtype=np.complex128)
        if grid.ndim != 2 or grid.size == 0:
            raise ValidationError(f"amplitudes: expected a 2-D grid, got shape {grid.shape}")
        if not np.all(np.isfinite(grid)):
            raise ValidationError("amplitudes: non-finite entry")
        n = np.linalg.norm(grid)
        if abs(n - 1.0) > NORM_TOL:
            raise ValidationError(f"amplitudes: state not normalized (norm {n!r})")
        object.__setattr__(self, "amplitudes", _readonly(grid))

    @classmethod
    def from_ket(cls, ket, dims: tuple[int, int]) -> "BipartiteState":
        ket = la.as_ket(ket)
        dim_a, dim_b = dims
        if dim_a * dim_b != ket.size:
            raise ValidationError(f"dimension {ket.size} does not factor as {dim_a} x {dim_b}")
        return cls(ket.reshape(dim_a, dim_b))

    @property
    def dims(self) -> tuple[int, int]:
        return self.amplitudes.shape

    @property
    def dim_a(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def dim_b(self) -> int:
        return self.amplitudes.shape[1]

    def ket(self) -> np.ndarray:
        return self.amplitudes.reshape(-1).copy()


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite operator."""

    matrix: np.ndarray

    def __post_init__(self):
        m = la.as_operator(self.matrix, "density matrix")
        if la.hermiticity_error(m) > DM_TOL:
            raise ValidationError("density matrix is not Hermitian")
        m = 0.5 * (m + m.conj().T)
        tr = np.trace(m).real
        if abs(tr - 1.0) > DM_TOL:
            raise ValidationError(f"density matrix trace is {tr!r}, not 1")
        object.__setattr__(self, "matrix", _readonly(m))
        if self.eigenvalues()[-1] < -NEG_EIG_TOL:
            raise ValidationError("density matrix has a negative eigenvalue")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        """Descending eigenvalues from the Jacobi solver (cached)."""
        cached = self.__dict__.get("_eigenvalues")
        if cached is None:
            cached = la.hermitian_eig(self.matrix).eigenvalues
            object.__setattr__(self, "_eigenvalues", cached)
        return cached


def tensor(a, b) -> np.ndarray:
    a, b = la.as_ket(a, "a"), la.as_ket(b, "b")
    return np.kron(a, b)


def _side(keep: str) -> str:
    side = str(keep).upper()
    if side not in ("A", "B"):
        raise ValidationError(f"keep must be 'A' or 'B', got {keep!r}")
    return side


def partial_trace(state_or_dm, keep: str = "A", dims: tuple[int, int] | None = None) -> DensityMatrix:
    """Reduced density matrix of one factor.

    Accepts a :class:`BipartiteState`, a composite ket, or a composite density
    matrix (``DensityMatrix`` or raw array); ``dims`` is required for the last
    two.  For a pure state with amplitude grid ``A`` the result is ``A A^H``
    (keep A) or ``A^T conj(A)`` (keep B).
    """
    side = _side(keep)
    if isinstance(state_or_dm, BipartiteState):
        grid = state_or_dm.amplitudes
        return DensityMatrix(grid @ grid.conj().T if side == "A" else grid.T @ grid.conj())

    if isinstance(state_or_dm, DensityMatrix):
        rho = state_or_dm.matrix
    else:
        rho = np.asarray(state_or_dm, dtype=np.complex128)
    if dims is None:
        raise ValidationError("dims is required unless a BipartiteState is given")
    dim_a, dim_b = (int(d) for d in dims)
    if dim_a < 1 or dim_b < 1:
        raise ValidationError("dims must be positive")

    if rho.ndim == 1:
        if rho.size != dim_a * dim_b:
            raise ValidationError(f"dimension {rho.size} does not factor as {dim_a} x {dim_b}")
        return partial_trace(BipartiteState.from_ket(rho, (dim_a, dim_b)), side)

    rho = la.as_operator(rho, "density matrix")
    if rho.shape[0] != dim_a * dim_b:
        raise ValidationError(f"dimension {rho.shape[0]} does not factor as {dim_a} x {dim_b}")
    t = rho.reshape(dim_a, dim_b, dim_a, dim_b)
    reduced = np.einsum("ijkj->ik", t) if side == "A" else np.einsum("ijil->jl", t)
    return DensityMatrix(reduced)


@dataclass(frozen=True)
class SchmidtForm:
    """``|psi> = sum_k coefficients[k] |left_k> |right_k>``."""

    coefficients: np.ndarray
    left_vectors: tuple
    right_vectors: tuple

    @property
    def rank(self) -> int:
        return len(self.coefficients)

    def reconstruct(self) -> np.ndarray:
        """Amplitude grid rebuilt from the decomposition."""
        return sum(s * np.outer(u, v) for s, u, v in zip(self.coefficients, self.left_vectors, self.right_vectors))


def schmidt(state: BipartiteState) -> SchmidtForm:
    """Schmidt decomposition via one-sided Jacobi SVD of the amplitude grid."""
    u, s, vh = la.jacobi_svd(state.amplitudes)
    return SchmidtForm(
        coefficients=s.copy(),
        left_vectors=tuple(u[:, k].copy() for k in range(s.size)),
        right_vectors=tuple(vh[k, :].copy() for k in range(s.size)),
    )


def _clean_spectrum(dm: DensityMatrix) -> np.ndarray:
    lam = dm.eigenvalues().copy()
    lam[(lam < 0.0) & (lam >= -NEG_EIG_TOL)] = 0.0
    lam[lam < ZERO_EIG] = 0.0
    return lam


def von_neumann_entropy(dm: DensityMatrix) -> float:
    """``-sum lambda ln lambda`` in nats, with ``0 ln 0 = 0``."""
    lam = _clean_spectrum(dm)
    lam = lam[lam > 0.0]
    return float(max(-np.sum(lam * np.log(lam)), 0.0))


def entropy_equality_gap(state: BipartiteState) -> float:
    """``|S(rho_A) - S(rho_B)|``; vanishes for every pure bipartite state."""
    return abs(von_neumann_entropy(partial_trace(state, "A")) - von_neumann_entropy(partial_trace(state, "B")))


def purity(dm: DensityMatrix) -> float:
    m = dm.matrix
    return float(np.real(np.vdot(m.conj().T, m)))


def random_bipartite_state(dim_a: int, dim_b: int, rng: np.random.Generator) -> BipartiteState:
    return BipartiteState.from_ket(la.random_ket(dim_a * dim_b, rng), (dim_a, dim_b))
