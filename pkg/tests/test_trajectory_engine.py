import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qlbe.scattering import Constant, GasSpec, ParticleSpec, classical_loss_rate
from qlbe.trajectory_engine import (
    SuperpositionState,
    apply_jump,
    component_rates,
    drift,
    invert_survival,
    jump_weights,
    kick_factor,
    loss_rate_scaled,
    run_trajectory,
    sample_jump,
    sample_transfer,
    sample_waiting_time,
    simulate_ensemble,
    survival,
    trajectory_rng,
)


def test_state_is_normalised_and_validated():
    s = SuperpositionState([3.0, 4.0j], [[1, 0, 0], [0, 1, 0]], 0.5)
    assert np.sum(s.weights) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        SuperpositionState([1.0], [[0, 0, 0], [1, 0, 0]], 1.0)
    with pytest.raises(ValueError):
        SuperpositionState([1.0], [[0, 0, 0]], 0.0)
    with pytest.raises(ValueError):
        SuperpositionState([0.0], [[0, 0, 0]], 1.0)


def test_kick_factor_is_reduced_mass_over_test_mass():
    assert kick_factor(1.0) == 0.5
    assert kick_factor(1e-9) == pytest.approx(1e-9)


@settings(max_examples=60, deadline=None)
@given(u=st.floats(0.0, 20.0), M=st.floats(0.05, 50.0))
def test_engine_rate_equals_classical_loss_rate(u, M):
    # Constant cross-section with Gamma_beta = n v_beta sigma_tot = 1.
    P = np.array([u * M, 0.0, 0.0])
    rate = classical_loss_rate(P, Constant(1.0), GasSpec(), ParticleSpec(M=M))
    assert loss_rate_scaled(u) == pytest.approx(rate, rel=1e-13)


@settings(max_examples=80, deadline=None)
@given(w=st.lists(st.floats(0.01, 1.0), min_size=2, max_size=4),
       r=st.lists(st.floats(0.1, 10.0), min_size=4, max_size=4),
       target=st.floats(1e-6, 0.999))
def test_waiting_time_inverts_the_survival_function(w, r, target):
    w = np.array(w) / np.sum(w)
    rates = r[: len(w)]
    tau = invert_survival(w, rates, target)
    assert survival(w, rates, tau) == pytest.approx(target, rel=1e-9, abs=1e-12)


def test_survival_with_a_silent_component_can_be_infinite():
    assert invert_survival([0.5, 0.5], [0.0, 2.0], 0.4) == math.inf
    assert math.isfinite(invert_survival([0.5, 0.5], [0.0, 2.0], 0.6))
    assert invert_survival([1.0], [0.0], 0.3) == math.inf


def test_eigenstate_waiting_times_are_exponential():
    state = SuperpositionState.eigenstate([1.5, 0, 0], 1.0)
    rate = component_rates(state)[0]
    rng = np.random.default_rng(3)
    taus = np.array([sample_waiting_time(state, rng) for _ in range(20_000)])
    assert stats.kstest(taus, "expon", args=(0, 1 / rate)).pvalue > 1e-3


def test_drift_damps_fast_components_and_keeps_momenta():
    state = SuperpositionState.symmetric_pair([0.2, 0, 0], 1.0)
    state = SuperpositionState(state.amplitudes, [[0.2, 0, 0], [3.0, 0, 0]], 1.0)
    r = component_rates(state)
    later = drift(state, 0.7)
    expected = state.weights * np.exp(-np.array(r) * 0.7)
    assert np.allclose(later.weights, expected / expected.sum(), rtol=1e-13)
    assert np.array_equal(later.momenta, state.momenta)
    assert later.time == pytest.approx(0.7)


def test_jump_shifts_every_component_by_the_same_kick():
    state = SuperpositionState.symmetric_pair([1.0, 0.5, 0], 0.25)
    k = np.array([0.3, -1.0, 2.0])
    after = apply_jump(state, k)
    assert np.allclose(after.momenta - state.momenta, kick_factor(0.25) * k)
    assert np.sum(after.weights) == pytest.approx(1.0)


def test_jump_reweights_by_the_lindblad_gaussian():
    state = SuperpositionState.symmetric_pair([1.0, 0, 0], 1.0)
    k = np.array([1.0, 0.0, 0.0])
    after = apply_jump(state, k)
    # Amplitude ratio exp(-(K/2 + U.K/K)^2 / 2) between the two components.
    ratio = math.exp(-((0.5 + 1.0) ** 2) / 2) / math.exp(-((0.5 - 1.0) ** 2) / 2)
    assert abs(after.amplitudes[0] / after.amplitudes[1]) == pytest.approx(ratio, rel=1e-13)


def test_jump_component_weights_follow_rates():
    state = SuperpositionState([1.0, 1.0], [[0, 0, 0], [3, 0, 0]], 1.0)
    w = jump_weights(state)
    r = np.array(component_rates(state))
    assert np.allclose(w, r / r.sum())


def test_transfer_at_rest_is_isotropic():
    rng = np.random.default_rng(8)
    k = np.array([sample_transfer([0, 0, 0], rng) for _ in range(30_000)])
    se = k.std(axis=0) / math.sqrt(len(k))
    assert np.all(np.abs(k.mean(axis=0)) < 4 * se)
    var = k.var(axis=0)
    assert np.max(var) / np.min(var) < 1.05


def test_transfer_opposes_the_motion():
    rng = np.random.default_rng(9)
    u = np.array([0.0, 2.0, 0.0])
    k = np.array([sample_transfer(u, rng) for _ in range(20_000)])
    assert k[:, 1].mean() < 0
    assert abs(k[:, 0].mean()) < 4 * k[:, 0].std() / math.sqrt(len(k))


def test_sample_jump_single_component_uses_its_momentum():
    state = SuperpositionState.eigenstate([0, 0, 4.0], 1.0)
    rng = np.random.default_rng(10)
    k = np.array([sample_jump(state, rng) for _ in range(5000)])
    assert k[:, 2].mean() < -3


def test_streams_depend_only_on_seed_and_index():
    a = trajectory_rng(5, 17).random(4)
    b = trajectory_rng(5, 17).random(4)
    c = trajectory_rng(5, 18).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_ensembles_are_identical_for_any_worker_count():
    state = SuperpositionState.symmetric_pair([1.0, 0, 0], 1.0)
    times = np.linspace(0, 2, 5)
    one = simulate_ensemble(state, 40, 2.0, times, 99, workers=1)
    two = simulate_ensemble(state, 40, 2.0, times, 99, workers=2)
    assert np.array_equal(one.mean_u, two.mean_u)
    assert np.array_equal(one.coherence, two.coherence)
    assert np.array_equal(one.n_jumps, two.n_jumps)
    other = simulate_ensemble(state, 40, 2.0, times, 100)
    assert not np.array_equal(one.mean_u, other.mean_u)


def test_trajectory_starts_from_the_initial_state():
    state = SuperpositionState.symmetric_pair([2.0, 0, 0], 0.5)
    rec = run_trajectory(state, 1.0, [0.0, 0.5, 1.0], np.random.default_rng(1))
    assert rec.coherence[0] == pytest.approx(1.0)
    assert rec.mean_usq[0] == pytest.approx(4.0)
    assert np.allclose(rec.mean_u[0], 0.0)
    with pytest.raises(ValueError):
        run_trajectory(state, 1.0, [1.0, 0.5], np.random.default_rng(1))


def test_coherence_of_a_balanced_pair_stays_within_bounds():
    # |c0 c1| <= 1/2 for a normalised pair, which is its initial value.
    state = SuperpositionState.symmetric_pair([1.0, 0, 0], 1.0)
    times = np.linspace(0, 5, 51)
    data = simulate_ensemble(state, 50, 5.0, times, 4)
    assert np.all(data.coherence <= 1 + 1e-12)
    assert np.all(data.coherence >= 0)
    assert data.coherence[:, -1].mean() < 0.5


def test_jump_counts_match_the_loss_rate():
    # A slowly moving heavy particle keeps its rate near the rest value.
    state = SuperpositionState.eigenstate([0, 0, 0], 0.01)
    data = simulate_ensemble(state, 400, 5.0, [5.0], 12)
    expected = 5.0 * loss_rate_scaled(0.0)
    se = math.sqrt(expected / 400)
    assert abs(data.n_jumps.mean() - expected) < 4 * se
