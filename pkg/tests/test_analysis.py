import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opinion_herding.analysis import (
    ContractionViolation,
    DimensionMismatch,
    IncompleteCoverage,
    conditional_mean_factor,
    conditional_variance_analytic,
    enumerate_one_step,
    herding_probability,
    layer_decomposition,
    martingale_series,
    middle_mass,
    neighbor_propagation_check,
    polarization_series,
    row_sum_contraction,
    upper_herding_probability,
    verify_conditional_mean,
    verify_conditional_variance,
)
from opinion_herding.core import OpinionState, partition_stubborn, validate_trust_matrix
from opinion_herding.dynamics import EnsembleSummary, ModelTag, RAConfig, Trajectory, ra_run, run_ensemble
from opinion_herding.networks import GeneratorSpec, generate_network, random_stubborn_instance, random_substochastic
from opinion_herding.spectral import spectral_radius

from oracles import enumerate_successor_moments, trust_distances

SQRT_HALF = math.sqrt(0.5)
PSI_RING3 = np.array([1 / (1 + SQRT_HALF), SQRT_HALF / (1 + SQRT_HALF)])


def _traj(y_rows):
    states = np.column_stack([np.zeros(len(y_rows)), np.asarray(y_rows, dtype=float)])
    return Trajectory(states, np.arange(len(y_rows)), ModelTag.RA)


def test_martingale_series_examples():
    ms = martingale_series(_traj(np.zeros((5, 2))), PSI_RING3)
    assert np.all(ms.values == 0) and np.all(ms.differences == 0)
    y = np.array([[0.5], [0.45], [0.3]])
    ms = martingale_series(_traj(y), [1.0])
    np.testing.assert_array_equal(ms.values, y[:, 0])
    ms = martingale_series(_traj(np.ones((1, 2))), PSI_RING3)
    assert ms.values[0] == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DimensionMismatch):
        martingale_series(_traj(np.ones((1, 2))), [1.0])


def test_martingale_differences_bounded(ring3):
    cfg = RAConfig(0.5, ring3, OpinionState([0, 1.0, 0.0]), 300)
    ms = martingale_series(ra_run(cfg, 1), PSI_RING3)
    assert np.all((ms.values >= 0) & (ms.values <= 1 + 1e-15))
    assert np.all(np.abs(ms.differences) <= 1)


def test_conditional_mean_factor():
    assert conditional_mean_factor(0.5, 0.5) == 0.75
    assert conditional_mean_factor(0.5, SQRT_HALF) == pytest.approx(0.8535533905932737, abs=1e-15)
    with pytest.raises(ValueError):
        conditional_mean_factor(0.5, 1.0)
    with pytest.raises(ValueError):
        conditional_mean_factor(0.0, 0.5)


def test_conditional_variance_examples():
    assert conditional_variance_analytic([0.0, 1.0], PSI_RING3, 0.5, SQRT_HALF) == 0.0
    assert conditional_variance_analytic([0.5], [1.0], 0.5, 0.5) == pytest.approx(0.015625, abs=1e-15)
    q = [[0, 0.5], [1, 0]]
    _, var = enumerate_successor_moments(q, 0.5, [0.5, 0.5], PSI_RING3)
    assert var == pytest.approx(0.016084957, abs=1e-9)
    assert conditional_variance_analytic([0.5, 0.5], PSI_RING3, 0.5, SQRT_HALF) == pytest.approx(var, abs=1e-15)


def test_enumeration_matches_plain_loop(ring3):
    cfg = RAConfig(0.5, ring3, OpinionState([0, 0.2, 0.7]), 1)
    law = enumerate_one_step(cfg, [0.2, 0.7])
    mean, var = enumerate_successor_moments([[0, 0.5], [1, 0]], 0.5, [0.2, 0.7], PSI_RING3)
    assert law.probabilities.sum() == pytest.approx(1.0, abs=1e-15)
    assert law.mean(PSI_RING3) == pytest.approx(mean, abs=1e-15)
    assert law.variance(PSI_RING3) == pytest.approx(var, abs=1e-15)


def test_verify_mean_examples(pair):
    cfg = RAConfig(0.5, pair, OpinionState([0, 0.0]), 1)
    rep = verify_conditional_mean(cfg, [0.0], [1.0], 0.5, 1000, 0)
    assert rep.empirical == rep.analytic == 0.0 and rep.z_score == 0.0
    # y = 1: action is 1 surely, Y' = 0.5 * 1 + 0.5 * 0.5 = 0.75
    rep = verify_conditional_mean(cfg, [1.0], [1.0], 0.5, 1000, 0)
    assert enumerate_one_step(cfg, [1.0]).mean([1.0]) == 0.75
    assert rep.analytic == 0.75 and rep.empirical == 0.75


def test_verify_variance_degenerate(ring3):
    cfg = RAConfig(0.5, ring3, OpinionState([0, 1.0, 0.0]), 1)
    rep = verify_conditional_variance(cfg, [1.0, 0.0], PSI_RING3, SQRT_HALF, 1000, 0)
    assert rep.empirical == 0.0 and rep.analytic == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_exact_conditional_laws(K, seed, alpha):
    rng = np.random.default_rng(seed)
    T = random_stubborn_instance(rng, K)
    pd = spectral_radius(partition_stubborn(T).interior)
    y = rng.random(K - 1)
    y[rng.random(K - 1) < 0.2] = rng.integers(0, 2)
    cfg = RAConfig(alpha, T, OpinionState.from_ordinary(0, y), 1)
    law = enumerate_one_step(cfg, y)
    psi = pd.left_vector
    assert abs(law.mean(psi) - conditional_mean_factor(alpha, pd.radius) * psi @ y) <= 1e-12
    assert abs(law.variance(psi) - conditional_variance_analytic(y, psi, alpha, pd.radius)) <= 1e-12


def test_monte_carlo_verification_z(ring3):
    cfg = RAConfig(0.5, ring3, OpinionState([0, 0.3, 0.6]), 1)
    for seed in range(3):
        assert verify_conditional_mean(cfg, [0.3, 0.6], PSI_RING3, SQRT_HALF, 100_000, seed).passed(4)
        assert verify_conditional_variance(cfg, [0.3, 0.6], PSI_RING3, SQRT_HALF, 100_000, seed).passed(4)


def test_ensemble_estimators_on_fixed_states():
    zero = EnsembleSummary.from_states(np.zeros((4, 3, 3)))
    assert np.all(polarization_series(zero, 1) == 0)
    assert middle_mass(zero, 1, 2) == 0
    np.testing.assert_array_equal(herding_probability(zero, 2), [0, 0])
    half = EnsembleSummary.from_states(np.tile([0.0, 0.5, 0.5], (6, 1, 1)), epsilons=(0.1,))
    assert polarization_series(half, 1)[0] == 0.0625
    assert middle_mass(half, 1, 0, 0.1) == 1.0
    np.testing.assert_array_equal(herding_probability(half, 0, 0.1), [1, 1])
    with pytest.raises(KeyError):
        middle_mass(half, 1, 0, 0.2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tail_consistency(seed):
    rng = np.random.default_rng(seed)
    states = rng.choice([0.0, 0.02, 0.5, 0.97, 1.0], size=(20, 4, 3))
    states[:, :, 0] = 0
    ens = EnsembleSummary.from_states(states, epsilons=(0.05,))
    at_top = (states >= 0.95).mean(axis=0)
    assert np.all(ens.herd_prob[0] <= ens.middle_mass[0] + at_top + 1e-15)


def test_herding_on_pair():
    T = validate_trust_matrix([[1, 0], [0.5, 0.5]])
    cfg = RAConfig(0.3, T, OpinionState([0, 0.9]), 150)
    ens = run_ensemble(cfg, 4000, 8, epsilons=(0.05,))
    tail = ens.herd_prob[0, :, 1]
    assert tail[0] == 1.0
    assert tail[-1] <= 0.05
    assert np.all(np.diff(tail[::10]) <= 0.02)
    assert upper_herding_probability(ens, 150)[0] == 1.0


def test_neighbor_propagation(ring3):
    # chain: agent 2 (index 1) trusts the stubborn agent, agent 3 (index 2) trusts agent 2
    cfg = RAConfig(0.3, ring3, OpinionState([0, 0.9, 0.9]), 150)
    ens = run_ensemble(cfg, 3000, 4, epsilons=(0.05,))
    table = neighbor_propagation_check(ens, ring3, 2, 1, 0.05, 0.05)
    t2 = neighbor_propagation_check(ens, ring3, 1, 0, 0.05, 0.05).first_time_below()
    t3 = table.first_time_below()
    assert t2 is not None and t3 is not None and t3 >= t2
    assert len(list(table.rows())) == 151
    zero = run_ensemble(RAConfig(0.3, ring3, OpinionState([0, 0, 0]), 5), 10, 0)
    assert neighbor_propagation_check(zero, ring3, 2, 1).first_time_below() == 0
    with pytest.raises(ValueError):
        neighbor_propagation_check(zero, ring3, 2, 0)


def test_layer_examples(ring3):
    ld = layer_decomposition(ring3)
    assert ld.layers == (frozenset({1}), frozenset({2})) and ld.depth == 1
    with pytest.raises(IncompleteCoverage) as e:
        layer_decomposition(validate_trust_matrix([[1, 0, 0], [0, 0, 1], [0, 1, 0]]))
    assert e.value.uncovered == {1, 2}
    star = generate_network(GeneratorSpec("star", 5, 1.0, require_irreducible=False))
    assert layer_decomposition(star).layers == (frozenset({1, 2, 3, 4}),)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.sampled_from(["one", "all"]))
def test_layers_match_bfs_distance(K, seed, links):
    T = random_stubborn_instance(np.random.default_rng(seed), K, links=links)
    dist = trust_distances(T.weights)
    layer_of = layer_decomposition(T).layer_of()
    assert set(layer_of) == set(range(1, K))
    for a, p in layer_of.items():
        assert p == dist[a] - 1


def test_row_sum_contraction_examples():
    rep = row_sum_contraction([[0.5]], 1)
    np.testing.assert_array_equal(rep.max_row_sums, [0.5])
    assert rep.first_strict_power == 1
    a = np.array([[0, 0.5], [1, 0]])
    rep = row_sum_contraction(a, 2)
    np.testing.assert_array_equal(rep.row_sums, [a.sum(axis=1), (a @ a).sum(axis=1)])
    np.testing.assert_array_equal(rep.row_sums, [[0.5, 1], [0.5, 0.5]])
    assert rep.first_strict_power == 2
    with pytest.raises(ContractionViolation):
        row_sum_contraction([[0, 1], [1, 0]])


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_row_sum_contraction_random(m, seed):
    a = random_substochastic(np.random.default_rng(seed), m)
    rep = row_sum_contraction(a)
    assert rep.first_strict_power <= m
    assert np.all(rep.row_sums[-1] < 1)
