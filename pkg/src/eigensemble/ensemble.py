"""Closed-form eigen-ensemble of a density operator built from two projectors.

For ``rho = P_a |a><a| + P_b |b><b|`` with normalized, linearly independent
``|a>``, ``|b>`` and ``P_a + P_b = 1``, the two nonzero eigenvectors are
written (unnormalized) as ``|e> = |a> + c r |b>`` where ``c = <a|b>`` has been
made real and nonnegative by rephasing ``|b>``.  The eigenvalue condition
reduces to the quadratic::

    c^2 r^2 + (1 - prat) r - prat = 0,        prat = P_b / P_a

whose roots give the eigenvalues ``P_a (1 + c^2 r)``.  Everything here works
in the two-dimensional span of ``{|a>, |b>}``; the ambient dimension may be
larger.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg as la
from .composite import BipartiteState
from .errors import ValidationError

EXACT_TOL = 1e-12
EIGEN_TOL = 1e-10
ORTHOGONAL_CUTOFF = 1e-12
DEPENDENCE_CUTOFF = 1.0 - 1e-9


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.complex128)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ProjectorMixture:
    """Weighted pair of rank-1 projectors, ``P_a |a><a| + (1 - P_a) |b><b|``."""

    alpha: np.ndarray
    beta: np.ndarray
    p_alpha: float

    def __post_init__(self):
        alpha = la.require_normalized(self.alpha, "alpha", EXACT_TOL)
        beta = la.require_normalized(self.beta, "beta", EXACT_TOL)
        if alpha.shape != beta.shape:
            raise ValidationError(f"alpha and beta differ in dimension ({alpha.size} vs {beta.size})")
        p = float(self.p_alpha)
        if not (0.0 < p < 1.0):
            raise ValidationError(f"p_alpha: must lie in the open interval (0, 1), got {p!r}")
        if abs(np.vdot(alpha, beta)) > DEPENDENCE_CUTOFF:
            raise ValidationError("alpha and beta are linearly dependent (|<alpha|beta>| >= 1 - 1e-9)")
        object.__setattr__(self, "alpha", _frozen(alpha))
        object.__setattr__(self, "beta", _frozen(beta))
        object.__setattr__(self, "p_alpha", p)

    @property
    def p_beta(self) -> float:
        return 1.0 - self.p_alpha

    @property
    def prat(self) -> float:
        return self.p_beta / self.p_alpha

    @property
    def dim(self) -> int:
        return self.alpha.size

    @property
    def overlap(self) -> float:
        """``|<alpha|beta>|``."""
        return float(abs(np.vdot(self.alpha, self.beta)))


def mixture_from_overlap(c: float, p_alpha: float, dim: int = 2, rng: np.random.Generator | None = None,
                         phase: float = 0.0) -> ProjectorMixture:
    """Build a mixture whose kets have overlap magnitude ``c``.

    Without ``rng`` the kets are ``alpha = e_0`` and
    ``beta = e^{i phase} (c e_0 + sqrt(1 - c^2) e_1)``.  With ``rng`` both are
    placed in a Haar-random orientation inside ``C^dim``.
    """
    if dim < 2:
        raise ValidationError("dim must be at least 2")
    if not (0.0 <= c < 1.0):
        raise ValidationError(f"c must lie in [0, 1), got {c!r}")
    if rng is None:
        alpha = np.zeros(dim, dtype=np.complex128)
        alpha[0] = 1.0
        perp = np.zeros(dim, dtype=np.complex128)
        perp[1] = 1.0
    else:
        alpha = la.random_ket(dim, rng)
        w = la.random_ket(dim, rng)
        w = w - np.vdot(alpha, w) * alpha
        perp = w / np.linalg.norm(w)
    beta = np.exp(1j * phase) * (c * alpha + math.sqrt(1.0 - c * c) * perp)
    beta = beta / np.linalg.norm(beta)
    return ProjectorMixture(alpha, beta, p_alpha)


@dataclass(frozen=True)
class AlignedOverlap:
    beta_aligned: np.ndarray
    c: float
    applied_phase: complex


def phase_align(alpha, beta) -> AlignedOverlap:
    """Rephase ``beta`` so that ``<alpha|beta'>`` is real and nonnegative."""
    alpha = la.require_normalized(alpha, "alpha", EXACT_TOL)
    beta = la.require_normalized(beta, "beta", EXACT_TOL)
    if alpha.shape != beta.shape:
        raise ValidationError("alpha and beta differ in dimension")
    z = complex(np.vdot(alpha, beta))
    mag = abs(z)
    phase = 1.0 + 0.0j if mag == 0.0 else z.conjugate() / mag
    return AlignedOverlap(_frozen(phase * beta), mag, phase)


def build_density(m: ProjectorMixture) -> np.ndarray:
    rho = m.p_alpha * np.outer(m.alpha, m.alpha.conj()) + m.p_beta * np.outer(m.beta, m.beta.conj())
    # exact Hermitian symmetry; roundoff in the two outer products can differ
    return 0.5 * (rho + rho.conj().T)


def solve_roots(c: float, prat: float) -> tuple[float, float]:
    """Roots ``(r_plus, r_minus)`` of ``c^2 r^2 + (1 - prat) r - prat = 0``.

    The larger-magnitude root comes from the sign-matched branch of the
    quadratic formula and the other from the product ``-prat / c^2``, so
    there is no cancellation when ``prat`` is near 1.
    """
    c, prat = float(c), float(prat)
    if not (0.0 < c < 1.0):
        raise ValidationError(f"c must lie in (0, 1), got {c!r}")
    if not (prat > 0.0) or not math.isfinite(prat):
        raise ValidationError(f"prat must be positive, got {prat!r}")
    a = c * c
    b = 1.0 - prat
    disc = b * b + 4.0 * a * prat
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    r1 = q / a
    r2 = -prat / q
    return (r1, r2) if r1 > r2 else (r2, r1)


def quadratic_residual(c: float, prat: float, r: float) -> float:
    """Residual of the root equation, scaled by its largest term."""
    terms = (c * c * r * r, (1.0 - prat) * r, -prat)
    return abs(sum(terms)) / max(1.0, max(abs(t) for t in terms))


@dataclass(frozen=True)
class EigenEnsemble:
    """The unique orthogonal decomposition ``rho = sum lambda |e><e|``.

    ``eigenvalues`` and ``eigenvectors`` are ordered by descending eigenvalue.
    ``roots`` is ``None`` for orthogonal kets, where ``alpha`` and ``beta``
    themselves are the eigenvectors.  ``root_order[k]`` is the index into
    ``roots`` (or into ``(alpha, beta)``) that produced eigenvalue ``k``.
    """

    mixture: ProjectorMixture
    c: float
    prat: float
    roots: tuple[float, float] | None
    eigenvalues: tuple[float, float]
    eigenvectors: tuple[np.ndarray, np.ndarray]
    degenerate: bool
    root_order: tuple[int, int] = field(default=(0, 1))

    @property
    def gap(self) -> float:
        return self.eigenvalues[0] - self.eigenvalues[1]


def eigen_decompose(m: ProjectorMixture) -> EigenEnsemble:
    aligned = phase_align(m.alpha, m.beta)
    c = aligned.c
    if c >= DEPENDENCE_CUTOFF:
        raise ValidationError("alpha and beta are linearly dependent")
    p_a, p_b = m.p_alpha, m.p_beta
    prat = p_b / p_a

    if c <= ORTHOGONAL_CUTOFF:
        pairs = sorted([(p_a, m.alpha, 0), (p_b, m.beta, 1)], key=lambda t: -t[0])
        return EigenEnsemble(
            mixture=m, c=c, prat=prat, roots=None,
            eigenvalues=(pairs[0][0], pairs[1][0]),
            eigenvectors=(_frozen(pairs[0][1]), _frozen(pairs[1][1])),
            degenerate=abs(p_a - 0.5) <= EXACT_TOL,
            root_order=(pairs[0][2], pairs[1][2]),
        )

    roots = solve_roots(c, prat)
    beta = aligned.beta_aligned
    found = []
    for idx, r in enumerate(roots):
        cr = c * r
        lam = p_a * (1.0 + c * cr)
        vec = (m.alpha + cr * beta) / math.sqrt(1.0 + 2.0 * c * cr + cr * cr)
        found.append((lam, vec, idx))
    found.sort(key=lambda t: -t[0])
    return EigenEnsemble(
        mixture=m, c=c, prat=prat, roots=roots,
        eigenvalues=(found[0][0], found[1][0]),
        eigenvectors=(_frozen(found[0][1]), _frozen(found[1][1])),
        degenerate=False,
        root_order=(found[0][2], found[1][2]),
    )


def reconstruct(e: EigenEnsemble) -> np.ndarray:
    """``sum_k lambda_k |e_k><e_k|``."""
    rho = sum(lam * np.outer(v, v.conj()) for lam, v in zip(e.eigenvalues, e.eigenvectors))
    return 0.5 * (rho + rho.conj().T)


def naive_interpretation_residual(m: ProjectorMixture) -> float:
    """Size of the component of ``rho|alpha>`` orthogonal to ``|alpha>``.

    Zero exactly when ``|alpha>`` is an eigenvector, i.e. when the weights
    could be read as probabilities.  Analytically ``c P_b sqrt(1 - c^2)``.
    """
    rho = build_density(m)
    v = rho @ m.alpha - m.p_alpha * m.alpha
    v = v - np.vdot(m.alpha, v) * m.alpha
    return float(np.linalg.norm(v))


def eigenvalue_gap(m: ProjectorMixture) -> float:
    c = m.overlap
    prat = m.prat
    return m.p_alpha * math.sqrt((1.0 - prat) ** 2 + 4.0 * c * c * prat)


def eigenvalue_gap_from_determinant(m: ProjectorMixture) -> float:
    """Same gap via ``sqrt(1 - 4 det)`` with ``det = P_a P_b (1 - c^2)``."""
    c = m.overlap
    return math.sqrt(max(1.0 - 4.0 * m.p_alpha * m.p_beta * (1.0 - c * c), 0.0))


# ---------------------------------------------------------------------------
# degeneracy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DegeneracySample:
    prat: float
    y: float
    c_degenerate: float | None


@dataclass(frozen=True)
class DegeneracyCurve:
    samples: tuple[DegeneracySample, ...]

    def argmax(self) -> DegeneracySample:
        return max(self.samples, key=lambda s: s.y)

    def degenerate_samples(self) -> list[DegeneracySample]:
        return [s for s in self.samples if s.c_degenerate is not None]


def degeneracy_radicand(prat: float) -> float:
    """``y = 2 - prat - 1/prat``, evaluated as ``-(prat - 1)^2 / prat``.

    The factored form is exactly zero at ``prat == 1`` and strictly negative
    elsewhere, so the sign test below never misfires from cancellation.
    """
    if not prat > 0.0:
        raise ValidationError(f"prat must be positive, got {prat!r}")
    return 0.0 - (prat - 1.0) ** 2 / prat


def degeneracy_scan(prat_min: float, prat_max: float, steps: int) -> DegeneracyCurve:
    """Sample the degeneracy radicand over ``steps`` evenly spaced ratios.

    ``prat = 1`` (the only point where a real degenerate overlap exists) is
    inserted when it lies inside the range but misses the grid.
    """
    if not (prat_min > 0.0 and prat_max > 0.0):
        raise ValidationError("prat bounds must be positive")
    if prat_min > prat_max:
        raise ValidationError("prat_min must not exceed prat_max")
    if int(steps) != steps or steps < 1:
        raise ValidationError(f"steps must be a positive integer, got {steps!r}")
    grid = [prat_min] if steps == 1 else list(np.linspace(prat_min, prat_max, int(steps)))
    if prat_min <= 1.0 <= prat_max and 1.0 not in grid:
        grid = sorted(grid + [1.0])
    samples = []
    for p in grid:
        p = float(p)
        y = degeneracy_radicand(p)
        c_deg = 0.5 * math.sqrt(y) if y >= 0.0 else None
        samples.append(DegeneracySample(p, y, c_deg))
    return DegeneracyCurve(tuple(samples))


# ---------------------------------------------------------------------------
# stability of the eigenbasis
# ---------------------------------------------------------------------------

def span_basis(m: ProjectorMixture) -> np.ndarray:
    """Orthonormal basis (columns) of span{alpha, beta}, starting with alpha."""
    w = m.beta - np.vdot(m.alpha, m.beta) * m.alpha
    w = w / np.linalg.norm(w)
    return np.column_stack([m.alpha, w])


def eigenbasis_sensitivity(m: ProjectorMixture, perturbation: float, seed: int = 0) -> float:
    """Largest principal angle (radians) the eigenbasis turns under a small kick.

    ``rho`` is compressed to the span of ``{alpha, beta}`` and perturbed by a
    seeded, traceless random Hermitian matrix of Frobenius norm
    ``perturbation``; eigenvectors of both are taken from the Jacobi solver and
    matched by eigenvalue order.  Expect roughly ``perturbation / gap``.
    """
    if perturbation < 0.0 or perturbation > 1e-2:
        raise ValidationError(f"perturbation must lie in [0, 1e-2], got {perturbation!r}")
    if perturbation == 0.0:
        return 0.0
    basis = span_basis(m)
    rho2 = basis.conj().T @ build_density(m) @ basis
    rng = np.random.default_rng(seed)
    dh = la.random_hermitian(2, rng)
    dh = dh - np.trace(dh).real / 2.0 * np.eye(2)
    dh *= perturbation / np.linalg.norm(dh)
    before = la.hermitian_eig(rho2)
    after = la.hermitian_eig(rho2 + dh)
    return max(la.principal_angle(u, v) for u, v in zip(before.eigenvectors, after.eigenvectors))


def mixture_purification(m: ProjectorMixture) -> BipartiteState:
    """``sqrt(P_a)|alpha>|0> + sqrt(P_b)|beta>|1>``; its first factor reduces to ``rho``."""
    grid = np.column_stack([math.sqrt(m.p_alpha) * m.alpha, math.sqrt(m.p_beta) * m.beta])
    return BipartiteState(grid)
