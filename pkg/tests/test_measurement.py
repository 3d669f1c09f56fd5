import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigensemble import ValidationError
from eigensemble import linalg as la
from eigensemble.composite import partial_trace, schmidt
from eigensemble.ensemble import eigenbasis_sensitivity, mixture_from_overlap
from eigensemble.measurement import (
    EnvironmentConfig,
    MeasurementModel,
    Observable,
    PointerLattice,
    branch_overlap_statistic,
    coherence_norm,
    correlated_state,
    environment_step,
    evolution_operator,
    fit_efold,
    pointer_basis,
    qnd_check,
    repeat_measurement_certitude,
    repeat_measurement_distribution,
    run_decoherence,
)

Z = np.diag([1.0, -1.0])
SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def two_branch(system=(1 / math.sqrt(2), 1 / math.sqrt(2)), dim_n=64, seed=0, **env):
    return MeasurementModel(
        np.asarray(system, dtype=complex),
        Observable.from_matrix(Z),
        PointerLattice(3),
        EnvironmentConfig(dim_n=dim_n, seed=seed, **env),
    )


def _expm_taylor(a, terms=30):
    # scaling and squaring around a plain Taylor series
    k = max(0, int(math.ceil(math.log2(max(np.linalg.norm(a, 1), 1.0)))) + 2)
    a = a / 2 ** k
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for n in range(1, terms):
        term = term @ a / n
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


# --- observable / pointer ----------------------------------------------------

def test_observable_validation():
    with pytest.raises(ValidationError):
        Observable.from_matrix(Z, shift_indices=(1, 1))
    with pytest.raises(ValidationError):
        Observable.from_matrix([[0, 1], [0, 0]])
    with pytest.raises(ValidationError):
        Observable(Z, ([1, 0], [1, 0]), (0, 1))
    with pytest.raises(ValidationError):
        Observable(SWAP, ([1, 0], [0, 1]), (0, 1))


def test_observable_from_nondiagonal_matrix():
    obs = Observable.from_matrix(SWAP)
    np.testing.assert_allclose(obs.eigenvalues(), [1, -1], atol=1e-14)


def test_pointer_lattice():
    p = PointerLattice(5, 3)
    assert p.cell(4) == 2
    np.testing.assert_array_equal(p.shifted(4), np.eye(5)[2])
    with pytest.raises(ValidationError):
        PointerLattice(4, 4)
    with pytest.raises(ValidationError):
        PointerLattice(3, packet=[1, 1, 0])


def test_environment_config_validation():
    with pytest.raises(ValidationError):
        EnvironmentConfig(dim_n=1)
    with pytest.raises(ValidationError):
        EnvironmentConfig(dim_n=4, events_per_step=0)
    with pytest.raises(ValidationError):
        EnvironmentConfig(dim_n=4, mode="random-walk")


# --- correlated state --------------------------------------------------------

def test_correlated_single_eigenstate_is_product():
    state = correlated_state([1, 0], Observable.from_matrix(Z), PointerLattice(3))
    assert schmidt(state).rank == 1


def test_correlated_equal_superposition_is_bell_like():
    state = correlated_state(np.array([1, 1]) / math.sqrt(2), Observable.from_matrix(Z), PointerLattice(3))
    np.testing.assert_allclose(schmidt(state).coefficients, [1 / math.sqrt(2)] * 2, atol=1e-15)


def test_correlated_pointer_diagonal():
    state = correlated_state([0.6, 0.8], Observable.from_matrix(Z), PointerLattice(3))
    pointer = partial_trace(state, "B").matrix
    np.testing.assert_allclose(np.diag(pointer).real, [0.36, 0.64, 0], atol=1e-15)
    system = partial_trace(state, "A").matrix
    np.testing.assert_allclose(system, np.diag([0.36, 0.64]), atol=1e-15)


def test_correlated_shift_collision():
    obs = Observable.from_matrix(Z, shift_indices=(0, 3))
    with pytest.raises(ValidationError, match="collision"):
        correlated_state([0.6, 0.8], obs, PointerLattice(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_correlated_born_rule(seed, n):
    rng = np.random.default_rng(seed)
    obs = Observable.from_matrix(la.random_hermitian(n, rng))
    system = la.random_ket(n, rng)
    state = correlated_state(system, obs, PointerLattice(2 * n + 1, 1))
    assert la.norm(state.ket()) == pytest.approx(1.0, abs=1e-12)
    basis = obs.basis_matrix()
    reduced = basis.conj().T @ partial_trace(state, "A").matrix @ basis
    amps = basis.conj().T @ system
    np.testing.assert_allclose(reduced, np.diag(np.abs(amps) ** 2), atol=1e-12)


# --- environment -------------------------------------------------------------

def test_environment_step_deterministic_and_normalized():
    cfg = EnvironmentConfig(dim_n=8, seed=3, mode="random-unitary")
    start = [la.random_ket(8, np.random.default_rng(1))] * 3
    a = environment_step(start, cfg)
    b = environment_step(start, cfg)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
        assert la.norm(x) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValidationError):
        environment_step([np.ones(4) / 2], cfg)


@pytest.mark.parametrize("mode,trials", [("random-vector", 10_000), ("random-unitary", 2000)])
def test_branch_overlap_statistic_64(mode, trials):
    assert branch_overlap_statistic(64, trials, seed=1, mode=mode) == pytest.approx(1 / 64, rel=0.1)


def test_branch_overlap_statistic_scales_inverse_n():
    ns = np.array([2, 8, 32, 128, 1024])
    stats = np.array([branch_overlap_statistic(int(n), 2000, seed=7) for n in ns])
    slope = np.polyfit(np.log(ns), np.log(stats), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.05)


def test_single_branch_coherence_stays_zero():
    trace = run_decoherence(two_branch(system=(1, 0)), 5)
    assert np.all(trace.coherences == 0)
    assert trace.efold_time is None and trace.flag == "zero-initial-coherence"


# --- coherence norm ----------------------------------------------------------

def test_coherence_norm_examples():
    e = [np.array([1, 0]), np.array([0, 1])]
    assert coherence_norm(np.diag([0.3, 0.7]), e) == 0
    assert coherence_norm(np.full((2, 2), 0.5), e) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        coherence_norm(np.eye(2) / 2, [np.array([1, 0]), np.array([1, 1]) / math.sqrt(2)])


def test_coherence_overlapping_packets():
    packet = la.normalize([1.0, 2.0, 1.0, 0.0, 0.0, 0.0])
    pointer = PointerLattice(6, packet=packet)
    obs = Observable.from_matrix(Z)
    c = np.array([0.6, 0.8j])
    state = correlated_state(c, obs, pointer)
    overlap = abs(np.vdot(pointer.shifted(1), pointer.shifted(0)))
    assert overlap == pytest.approx(4 / 6)
    got = coherence_norm(partial_trace(state, "A"), obs.eigenbasis)
    assert got == pytest.approx(2 * 0.6 * 0.8 * overlap, abs=1e-14)


# --- decoherence run ---------------------------------------------------------

def test_run_rejects_nonpositive_steps():
    with pytest.raises(ValidationError):
        run_decoherence(two_branch(), 0)
    with pytest.raises(ValidationError):
        run_decoherence(two_branch(), 2.5)


def test_run_is_deterministic():
    a = run_decoherence(two_branch(seed=9, dim_n=16), 12)
    b = run_decoherence(two_branch(seed=9, dim_n=16), 12)
    np.testing.assert_array_equal(a.coherences, b.coherences)
    assert a.efold_time == b.efold_time and a.fit_residual == b.fit_residual
    c = run_decoherence(two_branch(seed=10, dim_n=16), 12)
    assert not np.array_equal(a.coherences, c.coherences)


def test_step_zero_is_first_stage_value():
    model = two_branch(system=(0.6, 0.8), dim_n=8)
    trace = run_decoherence(model, 3)
    state = correlated_state(model.system, model.observable, model.pointer)
    ket = state.ket()
    expected = coherence_norm(np.outer(ket, ket.conj()), pointer_basis(model.observable, model.pointer))
    assert expected == pytest.approx(2 * 0.6 * 0.8)
    assert trace.steps[0].coherence == pytest.approx(expected, abs=1e-15)
    np.testing.assert_array_equal(trace.steps[0].branch_overlaps, np.ones((2, 2)))


def test_coherence_tracks_branch_overlap():
    trace = run_decoherence(two_branch(system=(0.6, 0.8), dim_n=4), 6)
    for rec in trace.steps:
        assert rec.coherence == pytest.approx(2 * 0.48 * rec.branch_overlaps[0, 1], rel=1e-12, abs=1e-300)
        np.testing.assert_allclose(np.diag(rec.branch_overlaps), 1.0, atol=1e-12)


def test_efold_matches_mean_ratio():
    # Monte-Carlo oracle: the decay rate per step is close to -ln E|<E1|E2>|
    rates, ratios = [], []
    for seed in range(16):
        trace = run_decoherence(two_branch(dim_n=64, seed=seed), 10)
        rates.append(1 / trace.efold_time)
        c = trace.coherences
        good = c[1:] > 1e-13
        ratios.extend((c[1:] / c[:-1])[good])
    oracle = -math.log(np.mean(ratios))
    assert np.mean(rates) == pytest.approx(oracle, rel=0.2)
    # and E|z| itself against Gamma(N) Gamma(3/2) / Gamma(N + 1/2)
    mean_abs = math.exp(math.lgamma(64) + math.lgamma(1.5) - math.lgamma(64.5))
    assert np.mean(ratios) == pytest.approx(mean_abs, rel=0.1)


def test_efold_monotone_in_environment_size():
    def mean_efold(n):
        return np.mean([run_decoherence(two_branch(dim_n=n, seed=s), 40).efold_time for s in range(16)])

    small, large = mean_efold(2), mean_efold(1024)
    assert small > 2 * large


def test_events_per_step_speeds_decay():
    one = np.mean([run_decoherence(two_branch(dim_n=16, seed=s), 20).efold_time for s in range(16)])
    three = np.mean([run_decoherence(two_branch(dim_n=16, seed=s, events_per_step=3), 20).efold_time
                     for s in range(16)])
    assert three < one / 2


def test_fit_efold_exact_exponential():
    c = np.exp(-np.arange(10) / 2.5)
    efold, rms, window = fit_efold(c)
    assert efold == pytest.approx(2.5, rel=1e-12)
    assert rms == pytest.approx(0, abs=1e-12)
    assert window == (1, 9)


def test_fit_efold_stops_at_floor_and_rejects_growth():
    c = [1.0, 1e-3, 1e-6, 1e-9, 1e-14, 1e-20]
    efold, _, window = fit_efold(c)
    assert window == (1, 3)
    assert efold == pytest.approx(1 / (3 * math.log(10)), rel=1e-12)
    assert fit_efold([1.0, 0.5, 0.9, 1.2])[0] is None
    assert fit_efold([1.0, 1e-20])[0] is None


# --- QND and repeated measurement -------------------------------------------

def test_qnd_examples():
    obs = Observable.from_matrix(np.diag([1.0, 2.0, 3.0]))
    assert qnd_check(obs.matrix @ obs.matrix, obs) == 0
    assert qnd_check(np.eye(3), obs) == 0
    swap = np.eye(3)[[1, 0, 2]]
    # [P, D] has entries +-(d2 - d1) at (0,1) and (1,0)
    assert qnd_check(swap, obs) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValidationError):
        qnd_check(np.eye(2), obs)


def test_certitude_qnd_all_branches():
    rng = np.random.default_rng(12)
    obs = Observable.from_matrix(la.random_hermitian(4, rng), shift_indices=(0, 2, 4, 6))
    model = MeasurementModel(la.random_ket(4, rng), obs, PointerLattice(13), EnvironmentConfig(dim_n=8))
    for k in range(4):
        assert repeat_measurement_certitude(model, k) == pytest.approx(1.0, abs=1e-10)
        h = obs.matrix @ obs.matrix + 2 * obs.matrix
        assert repeat_measurement_certitude(model, k, interaction=h, duration=0.7) == pytest.approx(1.0, abs=1e-10)


def test_repeat_distribution_examples():
    model = two_branch(system=(0.6, 0.8))
    np.testing.assert_allclose(repeat_measurement_distribution(model, 0), [1, 0], atol=1e-15)
    np.testing.assert_allclose(repeat_measurement_distribution(model, 1), [0, 1], atol=1e-15)
    with pytest.raises(ValidationError):
        repeat_measurement_distribution(model, 2)
    with pytest.raises(ValidationError):
        repeat_measurement_certitude(two_branch(system=(1, 0)), 1)


def test_certitude_non_qnd_matches_full_state_oracle():
    model = two_branch(system=(0.6, 0.8))
    h, t = SWAP + 0.3 * Z, 0.4
    assert qnd_check(h, model.observable) > 0
    got = repeat_measurement_certitude(model, 0, interaction=h, duration=t)
    # full system (x) pointer simulation with an independent matrix exponential
    d = model.pointer.dim_d
    psi = correlated_state(model.system, model.observable, model.pointer).ket()
    cell = np.zeros(d)
    cell[0] = 1
    psi = np.kron(np.eye(2), np.outer(cell, cell)) @ psi
    psi = psi / np.linalg.norm(psi)
    psi = np.kron(_expm_taylor(-1j * t * h), np.eye(d)) @ psi
    system = psi.reshape(2, d)[:, 0]
    again = correlated_state(system / np.linalg.norm(system), model.observable, model.pointer).ket()
    oracle = np.linalg.norm(again.reshape(2, d)[:, 0]) ** 2
    assert oracle < 1
    assert got == pytest.approx(oracle, abs=1e-12)
    assert got == pytest.approx(math.cos(t * math.hypot(1, 0.3)) ** 2
                                + (0.3 / math.hypot(1, 0.3)) ** 2 * math.sin(t * math.hypot(1, 0.3)) ** 2,
                                abs=1e-12)


def test_evolution_operator_is_unitary():
    rng = np.random.default_rng(2)
    h = la.random_hermitian(5, rng)
    u = evolution_operator(h, 1.3)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(5), atol=1e-12)
    np.testing.assert_allclose(u, _expm_taylor(-1.3j * h), atol=1e-10)
    v = la.random_ket(5, rng)
    assert la.norm(u @ v) == pytest.approx(1.0, abs=1e-12)


def test_decoherence_pins_near_degenerate_eigenbasis():
    # nearly equal weights plus overlapping pointer packets: the reduced system
    # eigenbasis starts far from the observable basis and is pulled onto it
    packet = la.normalize([1.0, 2.0, 1.0, 0.0, 0.0, 0.0])
    pointer = PointerLattice(6, packet=packet)
    obs = Observable.from_matrix(Z)
    c = np.sqrt([0.5 + 1e-3, 0.5 - 1e-3])
    model = MeasurementModel(c.astype(complex), obs, pointer, EnvironmentConfig(dim_n=16, seed=2))
    trace = run_decoherence(model, 12)
    packet_overlap = np.vdot(pointer.shifted(1), pointer.shifted(0))

    def misalignment(rec):
        rho = np.diag(c ** 2).astype(complex)
        rho[0, 1] = c[0] * c[1] * packet_overlap * rec.branch_overlaps[0, 1]
        rho[1, 0] = np.conj(rho[0, 1])
        vecs = la.hermitian_eig(rho).eigenvectors
        return max(min(la.principal_angle(v, e) for e in obs.eigenbasis) for v in vecs)

    angles = [misalignment(r) for r in trace.steps]
    assert angles[0] > 0.7
    assert angles[-1] < 1e-3
    # the undecohered record is also the fragile one
    fragile = mixture_from_overlap(1e-3, 0.5 + 1e-4)
    sturdy = mixture_from_overlap(1e-3, 0.9)
    assert eigenbasis_sensitivity(fragile, 1e-4) > 10 * eigenbasis_sensitivity(sturdy, 1e-4)
