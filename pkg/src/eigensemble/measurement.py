"""Toy Von Neumann measurement chain with environmental decoherence.

The pointer is a finite cyclic lattice.  Measuring an observable shifts the
pointer by a distinct number of cells per eigenvector, producing the
first-stage correlated state ``sum_i c_i |s_i> |p_0 + k_i>``.

Each recorded step then scatters ``events_per_step`` fresh environment
quanta, one per branch, and every quantum is kicked by an independent
seeded random draw.  Only the branch overlaps ``<E_i|E_j>`` matter for the
reduced state, so the environment is tracked as a running product of those
overlaps instead of an exponentially large tensor.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linalg as la
from .composite import BipartiteState, DensityMatrix, partial_trace
from .errors import ValidationError

log = logging.getLogger(__name__)

MODES = ("random-vector", "random-unitary")
FIT_FLOOR = 1e-13
EIGEN_TOL = 1e-10


def _readonly(arr) -> np.ndarray:
    arr = np.array(arr, dtype=np.complex128)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Observable:
    """Hermitian observable with an eigenbasis and a pointer shift per eigenvector."""

    matrix: np.ndarray
    eigenbasis: tuple
    shift_indices: tuple

    def __post_init__(self):
        m = la.as_operator(self.matrix, "observable")
        if not la.is_hermitian(m, EIGEN_TOL):
            raise ValidationError("observable: matrix is not Hermitian")
        basis = np.column_stack([la.as_ket(b, "eigenbasis vector") for b in self.eigenbasis])
        n = m.shape[0]
        if basis.shape != (n, n):
            raise ValidationError(f"observable: need {n} eigenbasis vectors of dimension {n}")
        if np.max(np.abs(basis.conj().T @ basis - np.eye(n))) > EIGEN_TOL:
            raise ValidationError("observable: eigenbasis is not orthonormal")
        rotated = basis.conj().T @ m @ basis
        off = rotated - np.diag(np.diag(rotated))
        if np.max(np.abs(off)) > EIGEN_TOL:
            raise ValidationError("observable: eigenbasis does not diagonalize the matrix")
        shifts = tuple(int(k) for k in self.shift_indices)
        if len(shifts) != n:
            raise ValidationError(f"observable: expected {n} shift indices, got {len(shifts)}")
        if len(set(shifts)) != n:
            raise ValidationError("observable: shift indices must be pairwise distinct")
        object.__setattr__(self, "matrix", _readonly(m))
        object.__setattr__(self, "eigenbasis", tuple(_readonly(basis[:, k]) for k in range(n)))
        object.__setattr__(self, "shift_indices", shifts)

    @classmethod
    def from_matrix(cls, matrix, shift_indices: Sequence[int] | None = None) -> "Observable":
        """Eigenbasis from the Jacobi solver; diagonal matrices keep the standard basis.

        Default shifts are ``0, 1, 2, ...`` in eigenbasis order.
        """
        m = la.as_operator(matrix, "observable")
        n = m.shape[0]
        if np.max(np.abs(m - np.diag(np.diag(m)))) <= EIGEN_TOL:
            basis = tuple(np.eye(n, dtype=np.complex128)[:, k] for k in range(n))
        else:
            basis = la.hermitian_eig(m).eigenvectors
        shifts = tuple(range(n)) if shift_indices is None else tuple(shift_indices)
        return cls(m, basis, shifts)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def basis_matrix(self) -> np.ndarray:
        return np.column_stack(self.eigenbasis)

    def eigenvalues(self) -> np.ndarray:
        b = self.basis_matrix()
        return np.real(np.einsum("ik,ij,jk->k", b.conj(), self.matrix, b))


@dataclass(frozen=True)
class PointerLattice:
    """Cyclic pointer of ``dim_d`` cells.

    The ready state is the cell ``initial_index`` unless ``packet`` gives a
    normalized wave packet over the lattice.
    """

    dim_d: int
    initial_index: int = 0
    packet: np.ndarray | None = None

    def __post_init__(self):
        if int(self.dim_d) < 1:
            raise ValidationError("pointer: dim_d must be positive")
        if not 0 <= int(self.initial_index) < int(self.dim_d):
            raise ValidationError(f"pointer: initial_index must lie in [0, {self.dim_d})")
        if self.packet is not None:
            p = la.require_normalized(self.packet, "pointer packet")
            if p.size != self.dim_d:
                raise ValidationError("pointer: packet length must equal dim_d")
            object.__setattr__(self, "packet", _readonly(p))

    def ready_state(self) -> np.ndarray:
        if self.packet is not None:
            return self.packet.copy()
        v = np.zeros(self.dim_d, dtype=np.complex128)
        v[self.initial_index] = 1.0
        return v

    def cell(self, shift: int) -> int:
        return (self.initial_index + shift) % self.dim_d

    def shifted(self, shift: int) -> np.ndarray:
        """``Shift^k`` applied to the ready state."""
        return np.roll(self.ready_state(), shift)


@dataclass(frozen=True)
class EnvironmentConfig:
    dim_n: int
    seed: int = 0
    events_per_step: int = 1
    mode: str = "random-vector"

    def __post_init__(self):
        if int(self.dim_n) < 2:
            raise ValidationError("environment: dim_n must be at least 2")
        if int(self.dim_n) > la.MAX_DIM:
            raise ValidationError(f"environment: dim_n must not exceed {la.MAX_DIM}")
        if int(self.events_per_step) < 1:
            raise ValidationError("environment: events_per_step must be positive")
        if self.mode not in MODES:
            raise ValidationError(f"environment: mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class MeasurementModel:
    system: np.ndarray
    observable: Observable
    pointer: PointerLattice
    environment: EnvironmentConfig

    def __post_init__(self):
        s = la.require_normalized(self.system, "system")
        if s.size != self.observable.dim:
            raise ValidationError("system and observable differ in dimension")
        object.__setattr__(self, "system", _readonly(s))


def _cells(obs: Observable, pointer: PointerLattice) -> list[int]:
    cells = [pointer.cell(k) for k in obs.shift_indices]
    if len(set(cells)) != len(cells):
        raise ValidationError(
            f"pointer shift collision: shifts {obs.shift_indices} wrap onto the same cell of a "
            f"{pointer.dim_d}-cell lattice")
    return cells


def branch_amplitudes(system, obs: Observable) -> np.ndarray:
    """``c_i = <s_i|system>`` in the observable's eigenbasis."""
    return obs.basis_matrix().conj().T @ la.as_ket(system, "system")


def correlated_state(system, obs: Observable, pointer: PointerLattice) -> BipartiteState:
    """First-stage state ``sum_i c_i |s_i> (x) Shift^{k_i} |p_0>`` as a (system, pointer) grid."""
    system = la.require_normalized(system, "system")
    if system.size != obs.dim:
        raise ValidationError("system and observable differ in dimension")
    _cells(obs, pointer)
    amps = branch_amplitudes(system, obs)
    grid = sum(c * np.outer(s, pointer.shifted(k))
               for c, s, k in zip(amps, obs.eigenbasis, obs.shift_indices))
    return BipartiteState(grid)


def environment_step(branch_env_states: Sequence, cfg: EnvironmentConfig,
                     rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Kick each branch's environment ket once.

    ``random-unitary`` applies an independent Haar unitary per branch;
    ``random-vector`` replaces each ket by an independent Haar vector.  Draws
    come from ``rng`` (default: a generator seeded with ``cfg.seed``).
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    states = [la.as_ket(e, "environment state") for e in branch_env_states]
    for e in states:
        if e.size != cfg.dim_n:
            raise ValidationError(f"environment state has dimension {e.size}, expected {cfg.dim_n}")
    if cfg.mode == "random-vector":
        return [la.random_ket(cfg.dim_n, rng) for _ in states]
    return [la.random_unitary(cfg.dim_n, rng) @ e for e in states]


def branch_overlap_statistic(dim_n: int, trials: int, seed: int = 0, mode: str = "random-vector") -> float:
    """Mean ``|<E_1|E_2>|^2`` for two branches kicked from a common start."""
    cfg = EnvironmentConfig(dim_n=dim_n, seed=seed, mode=mode)
    rng = np.random.default_rng(seed)
    start = np.zeros(dim_n, dtype=np.complex128)
    start[0] = 1.0
    total = 0.0
    for _ in range(trials):
        e1, e2 = environment_step([start, start], cfg, rng)
        total += abs(np.vdot(e1, e2)) ** 2
    return total / trials


def coherence_norm(dm, basis: Sequence) -> float:
    """Sum of off-diagonal magnitudes ``sum_{i != j} |<b_i|rho|b_j>|``."""
    rho = dm.matrix if isinstance(dm, DensityMatrix) else la.as_operator(dm, "density matrix")
    b = np.column_stack([la.as_ket(v, "basis vector") for v in basis])
    if b.shape != rho.shape:
        raise ValidationError(f"basis must hold {rho.shape[0]} vectors of dimension {rho.shape[0]}")
    if np.max(np.abs(b.conj().T @ b - np.eye(b.shape[1]))) > EIGEN_TOL:
        raise ValidationError("basis is not orthonormal")
    r = b.conj().T @ rho @ b
    return float(np.sum(np.abs(r)) - np.sum(np.abs(np.diag(r))))


def pointer_basis(obs: Observable, pointer: PointerLattice) -> list[np.ndarray]:
    """Product basis ``|s_i> (x) |cell j>`` of the system-pointer space."""
    cells = np.eye(pointer.dim_d, dtype=np.complex128)
    return [np.kron(s, cells[:, j]) for s in obs.eigenbasis for j in range(pointer.dim_d)]


@dataclass(frozen=True)
class StepRecord:
    step: int
    coherence: float
    branch_overlaps: np.ndarray


@dataclass(frozen=True)
class DecoherenceTrace:
    """Per-step coherence plus the fitted e-folding time (in steps).

    ``efold_time`` is ``None`` when no decay could be fitted; ``flag`` says
    why.  ``fit_residual`` is the RMS residual of the ``ln(coherence)`` fit.
    """

    steps: tuple[StepRecord, ...]
    efold_time: float | None
    fit_residual: float | None
    fit_window: tuple[int, int] | None = None
    flag: str | None = None

    @property
    def coherences(self) -> np.ndarray:
        return np.array([r.coherence for r in self.steps])


def fit_efold(coherences: Sequence[float], floor: float = FIT_FLOOR):
    """Least-squares fit of ``ln(coherence)`` against step.

    The window starts at step 1 and ends before the first value below
    ``floor``.  Returns ``(efold_time, rms_residual, (first, last))`` or
    ``(None, None, window)`` when fewer than two points remain or the fitted
    slope does not decay.
    """
    values = np.asarray(coherences, dtype=float)
    end = 1
    while end < values.size and values[end] >= floor:
        end += 1
    window = (1, end - 1)
    if end - 1 < 2:
        return None, None, window
    t = np.arange(1, end, dtype=float)
    y = np.log(values[1:end])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    if slope >= 0.0:
        return None, rms, window
    return float(-1.0 / slope), rms, window


def run_decoherence(model: MeasurementModel, steps: int) -> DecoherenceTrace:
    if int(steps) != steps or steps < 1:
        raise ValidationError(f"steps must be a positive integer, got {steps!r}")
    obs, pointer, cfg = model.observable, model.pointer, model.environment
    correlated_state(model.system, obs, pointer)  # validates shifts
    amps = branch_amplitudes(model.system, obs)
    branches = np.column_stack([c * np.kron(s, pointer.shifted(k))
                                for c, s, k in zip(amps, obs.eigenbasis, obs.shift_indices)])
    basis = np.column_stack(pointer_basis(obs, pointer))
    n = obs.dim
    rng = np.random.default_rng(cfg.seed)
    start = np.zeros(cfg.dim_n, dtype=np.complex128)
    start[0] = 1.0
    overlaps = np.ones((n, n), dtype=np.complex128)

    def record(step: int) -> StepRecord:
        # rho_SP = sum_ij <E_j|E_i> |psi_i><psi_j|
        rho = branches @ overlaps.T @ branches.conj().T
        r = basis.conj().T @ rho @ basis
        coh = float(np.sum(np.abs(r)) - np.sum(np.abs(np.diag(r))))
        mags = np.abs(overlaps)
        mags.flags.writeable = False
        return StepRecord(step, max(coh, 0.0), mags)

    records = [record(0)]
    for step in range(1, int(steps) + 1):
        for _ in range(cfg.events_per_step):
            quanta = np.column_stack(environment_step([start] * n, cfg, rng))
            overlaps = overlaps * (quanta.conj().T @ quanta)
        records.append(record(step))

    if records[0].coherence <= 0.0:
        log.warning("initial coherence is zero; no decoherence time to fit")
        return DecoherenceTrace(tuple(records), None, None, None, "zero-initial-coherence")
    efold, rms, window = fit_efold([r.coherence for r in records])
    flag = None if efold is not None else "no-decay-fit"
    return DecoherenceTrace(tuple(records), efold, rms, window, flag)


def qnd_check(interaction, obs: Observable) -> float:
    """Frobenius norm of ``[interaction, observable]``; zero for a QND coupling."""
    h = la.as_operator(interaction, "interaction")
    if h.shape != obs.matrix.shape:
        raise ValidationError("interaction and observable differ in dimension")
    return la.frobenius_norm(la.commutator(h, obs.matrix))


def evolution_operator(hamiltonian, duration: float = 1.0) -> np.ndarray:
    """``exp(-i t H)`` through the Jacobi eigenbasis of ``H``."""
    res = la.hermitian_eig(hamiltonian)
    v = res.as_matrix()
    return (v * np.exp(-1j * duration * res.eigenvalues)) @ v.conj().T


def repeat_measurement_distribution(model: MeasurementModel, branch_index: int, interaction=None,
                                    duration: float = 1.0) -> np.ndarray:
    """Outcome distribution of a second measurement, given the first read ``branch_index``.

    The correlated state is projected onto the pointer cell of the chosen
    branch and renormalized; the system is optionally evolved by
    ``exp(-i duration H)`` and then coupled to a fresh pointer.  Environment
    records ride along with each branch and do not change this projection.
    """
    obs, pointer = model.observable, model.pointer
    cells = _cells(obs, pointer)
    if not 0 <= branch_index < len(cells):
        raise ValidationError(f"branch_index must lie in [0, {len(cells)})")
    grid = correlated_state(model.system, obs, pointer).amplitudes
    conditioned = grid[:, cells[branch_index]]
    prob = float(np.vdot(conditioned, conditioned).real)
    if prob <= 1e-14:
        raise ValidationError(f"branch {branch_index} has zero probability")
    conditioned = conditioned / math.sqrt(prob)
    if interaction is not None:
        h = la.as_operator(interaction, "interaction")
        if h.shape != obs.matrix.shape:
            raise ValidationError("interaction and observable differ in dimension")
        conditioned = evolution_operator(h, duration) @ conditioned
        conditioned = conditioned / np.linalg.norm(conditioned)
    second = correlated_state(conditioned, obs, pointer)
    reduced = partial_trace(second, "B").matrix
    return np.array([reduced[c, c].real for c in cells])


def repeat_measurement_certitude(model: MeasurementModel, branch_index: int, interaction=None,
                                 duration: float = 1.0) -> float:
    """Probability that a repeated measurement reproduces ``branch_index``."""
    return float(repeat_measurement_distribution(model, branch_index, interaction, duration)[branch_index])
