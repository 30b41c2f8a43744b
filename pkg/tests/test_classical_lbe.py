import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qlbe.classical_lbe import (
    MomentumHistogram,
    detailed_balance_residual,
    entropy_from_counts,
    entropy_history,
    equilibrium_reference,
    relative_entropy,
    stationary_residual,
    thermal_bin_probabilities,
    transition_symmetry,
)
from qlbe.scattering import (
    BornPotential,
    Constant,
    GasSpec,
    GaussianPotential,
    ParticleSpec,
    PowerLaw,
    classical_gain_rate,
)
from qlbe.structure_factor import energy_transfer, thermal_density

GAS = GasSpec()
PART = ParticleSpec(M=2.0)
MODELS = [Constant(1.0), PowerLaw(0.1, -0.4), BornPotential(GaussianPotential(0.3, 0.7))]
vec = st.tuples(*[st.floats(-3.0, 3.0)] * 3).map(np.array)


@settings(max_examples=40, deadline=None)
@given(P=vec, Q=vec)
def test_kick_rates_obey_detailed_balance(P, Q):
    if np.linalg.norm(Q) < 1e-3:
        return
    for model in MODELS:
        assert detailed_balance_residual(P, Q, model, GAS, PART) < 1e-12


@settings(max_examples=40, deadline=None)
@given(P=vec, Pp=vec)
def test_symmetrised_transition_kernel_is_symmetric(P, Pp):
    if np.linalg.norm(P - Pp) < 1e-3:
        return
    for model in MODELS:
        w, wt = transition_symmetry(P, Pp, model, GAS, PART)
        assert w == pytest.approx(wt, rel=1e-12)


def test_balance_fails_at_the_wrong_temperature():
    P = np.array([0.4, 0.1, -0.2])
    Q = np.array([1.0, 0.5, 0.3])
    hot = GasSpec(beta=1.0)
    # Rates from a gas at one temperature, Boltzmann factor from another.
    assert detailed_balance_residual(P, Q, Constant(1.0), hot, PART) < 1e-12
    fwd = classical_gain_rate(P + Q, Q, Constant(1.0), hot, PART)
    bwd = classical_gain_rate(P, -Q, Constant(1.0), hot, PART)
    assert abs(fwd / (bwd * math.exp(-GAS.beta * energy_transfer(Q, P, PART.M))) - 1) > 0.1


@pytest.mark.parametrize("model", [Constant(1.0), BornPotential(GaussianPotential(0.3, 0.7))],
                         ids=["constant", "born"])
def test_thermal_density_is_stationary(model):
    grid = [[0.0, 0.0, 0.2], [1.0, -0.5, 0.3], [0.0, 2.5, 0.0]]
    assert stationary_residual(model, GAS, PART, grid) < 1e-10
    wrong = thermal_density(GAS, PART, beta=1.5)
    assert stationary_residual(model, GAS, PART, grid, density=wrong) > 1e-2


def test_histogram_counts_outside_and_merges():
    rng = np.random.default_rng(0)
    a = rng.normal(scale=2.5, size=(4000, 3))
    b = rng.normal(scale=2.5, size=(3000, 3))
    ha = MomentumHistogram.from_samples(a)
    hb = MomentumHistogram.from_samples(b)
    whole = MomentumHistogram.from_samples(np.vstack([a, b]))
    merged = ha.merge(hb)
    assert np.array_equal(merged.counts, whole.counts)
    assert merged.outside == whole.outside
    assert whole.total == 7000
    assert whole.outside == int(np.sum(np.any(np.abs(np.vstack([a, b])) >= 6.0, axis=1)))
    inside = whole.counts.sum() / whole.total
    assert np.sum(whole.density()) * whole.width**3 == pytest.approx(inside)
    with pytest.raises(ValueError):
        ha.merge(MomentumHistogram.empty(width=0.5))


def test_bin_index_matches_numpy_histogram():
    u = np.random.default_rng(3).uniform(-7, 7, size=(2000, 3))
    h = MomentumHistogram.from_samples(u)
    ref, _ = np.histogramdd(u, bins=[h.edges] * 3)
    assert np.array_equal(h.counts, ref.astype(np.int64))


def test_bin_probabilities_match_the_gaussian_cdf():
    edges = np.linspace(-2, 2, 5)
    p = thermal_bin_probabilities(edges, 0.7)
    cdf = stats.norm(scale=math.sqrt(0.7)).cdf(edges)
    p1 = np.diff(cdf)
    assert np.allclose(p, np.einsum("i,j,k->ijk", p1, p1, p1), rtol=1e-13)
    assert np.sum(equilibrium_reference(1.0)) == pytest.approx(1.0, abs=1e-12)
    assert np.sum(equilibrium_reference(4.0)) < 1.0


@settings(max_examples=60, deadline=None)
@given(counts=st.lists(st.integers(0, 50), min_size=8, max_size=8),
       ref=st.lists(st.floats(0.01, 1.0), min_size=8, max_size=8),
       spare=st.floats(0.0, 2.0))
def test_entropy_is_non_negative(counts, ref, spare):
    counts = np.array(counts)
    if np.all(counts < 5):
        with pytest.raises(ValueError):
            entropy_from_counts(counts, ref)
        return
    # Reference mass may be below one, never above.
    g = np.array(ref) / (np.sum(ref) + spare)
    assert entropy_from_counts(counts, g) >= -1e-15


def test_entropy_vanishes_on_the_reference_and_flags_impossible_bins():
    g = np.array([0.1, 0.2, 0.3, 0.4])
    assert entropy_from_counts(g * 1000, g) == pytest.approx(0.0, abs=1e-15)
    assert entropy_from_counts([10, 10, 0, 0], [0.5, 0.0, 0.25, 0.25]) == math.inf


def test_thermal_samples_have_small_entropy():
    u = np.random.default_rng(5).normal(scale=math.sqrt(0.5), size=(200_000, 3))
    h = MomentumHistogram.from_samples(u)
    g = equilibrium_reference(1.0)
    kept = h.counts >= 5
    floor = -math.log(g[kept].sum())
    # Dropping sparse tail bins sets a floor; the plug-in bias is about K / 2N.
    bias = kept.sum() / (2 * u.shape[0])
    assert floor <= relative_entropy(h, g) < floor + 3 * bias


def test_entropy_history_falls_towards_equilibrium():
    rng = np.random.default_rng(7)
    # Synthetic Ornstein-Uhlenbeck ensemble relaxing from U = (3, 0, 0).
    times = np.linspace(0, 3, 7)
    var = 0.5
    mean = np.exp(-times)[:, None] * np.array([3.0, 0.0, 0.0])
    sd = np.sqrt(var * (1 - np.exp(-2 * times)))
    z = rng.normal(size=(4000, 1, 3))
    u = mean[None] + sd[None, :, None] * z
    run = entropy_history(times, u, 1.0, n_boot=50, seed=2)
    assert np.all(run.step < 0)
    assert run.increases().size == 0
    assert run.entropy_se.shape == times.shape and np.all(run.step_se > 0)
