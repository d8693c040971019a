import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opinion_herding.core import HypothesisViolated, StubbornPartition, partition_stubborn, validate_trust_matrix
from opinion_herding.networks import random_stubborn_instance, random_substochastic
from opinion_herding.spectral import (
    NoConvergence,
    consensus_gain,
    limit_power,
    neumann_partial_sum,
    spectral_radius,
)

from oracles import power_sum

SQRT_HALF = math.sqrt(0.5)
# psi^T Q = lam psi^T for Q = [[0, .5], [1, 0]]: psi_2 = lam psi_1, psi_1 + psi_2 = 1
PSI_RING3 = np.array([1 / (1 + SQRT_HALF), SQRT_HALF / (1 + SQRT_HALF)])


def test_spectral_radius_scalar():
    pd = spectral_radius([[0.5]])
    assert pd.radius == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(pd.left_vector, [1.0])


def test_spectral_radius_ring3():
    # roots of lam^2 - 0.5
    char_root = max(np.roots([1, 0, -0.5]).real)
    pd = spectral_radius([[0, 0.5], [1, 0]])
    assert pd.radius == pytest.approx(char_root, abs=1e-12)
    np.testing.assert_allclose(pd.left_vector, PSI_RING3, atol=1e-12)
    np.testing.assert_allclose(PSI_RING3, [0.58579, 0.41421], atol=1e-5)
    assert pd.residual <= 1e-12


def test_spectral_radius_periodic_needs_shift():
    # plain power iteration on this matrix oscillates forever from a non-uniform start
    q = np.array([[0.0, 1.0], [1.0, 0.0]])
    v = np.array([0.9, 0.1])
    for _ in range(50):
        v = q.T @ v
    assert abs(v[0] - v[1]) > 0.5
    pd = spectral_radius(q)
    assert pd.radius == pytest.approx(1.0, abs=1e-12)
    pd = spectral_radius([[0, 1, 0], [0, 0, 1], [0.7, 0, 0]])
    assert pd.radius == pytest.approx(0.7 ** (1 / 3), abs=1e-12)


def test_spectral_radius_no_convergence():
    with pytest.raises(NoConvergence):
        spectral_radius(np.array([[0.2, 0.7, 0.1], [0.3, 0.1, 0.5], [0.9, 0.0, 0.05]]), max_iter=2)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_substochastic_radius_below_one_and_positive_vector(m, seed):
    a = random_substochastic(np.random.default_rng(seed), m)
    pd = spectral_radius(a)
    assert pd.radius < 1
    assert np.all(pd.left_vector > 0)
    assert pd.left_vector.sum() == pytest.approx(1.0, abs=1e-12)
    assert pd.radius == pytest.approx(max(abs(np.linalg.eigvals(a))), abs=1e-9)


def test_consensus_gain_examples():
    g = consensus_gain(StubbornPartition(np.array([0.5]), np.array([[0.5]])))
    np.testing.assert_allclose(g.gain_column, [1.0], atol=1e-15)
    # (I - Q)^-1 = [[2, 1], [2, 2]] for Q = [[0, .5], [1, 0]]
    inverse = np.array([[2.0, 1.0], [2.0, 2.0]])
    g = consensus_gain(StubbornPartition(np.array([0.5, 0.0]), np.array([[0, 0.5], [1, 0]])))
    np.testing.assert_allclose(g.gain_column, inverse @ [0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(g.gain_column, [1.0, 1.0], atol=1e-15)
    with pytest.raises(HypothesisViolated):
        consensus_gain(StubbornPartition(np.zeros(2), np.array([[0, 1.0], [1.0, 0]])))


def test_neumann_examples():
    np.testing.assert_allclose(neumann_partial_sum([[0.5]], [0.5], 3), [0.875])
    q, r = np.array([[0, 0.5], [1, 0]]), np.array([0.5, 0.0])
    np.testing.assert_allclose(neumann_partial_sum(q, r, 2), power_sum(q, r, 2))
    np.testing.assert_allclose(neumann_partial_sum(q, r, 2), [0.5, 0.5])
    np.testing.assert_array_equal(neumann_partial_sum(q, r, 1), r)
    with pytest.raises(ValueError):
        neumann_partial_sum(q, r, 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_neumann_identity(m, seed, n):
    q = random_substochastic(np.random.default_rng(seed), m)
    qn = np.linalg.matrix_power(q, n)
    for j in range(m):
        e = np.eye(m)[j]
        lhs = (np.eye(m) - q) @ neumann_partial_sum(q, e, n)
        assert np.max(np.abs(lhs - (e - qn @ e))) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 10), st.integers(0, 2**32 - 1))
def test_neumann_converges_to_gain(K, seed):
    T = random_stubborn_instance(np.random.default_rng(seed), K)
    p = partition_stubborn(T)
    gain = consensus_gain(p).gain_column
    lam = spectral_radius(p.interior).radius
    n_final = math.ceil(math.log(1e-8) / math.log(lam))
    checkpoints = sorted({1, 2, 4, 8, n_final // 4 + 1, n_final // 2 + 1, n_final})
    errs = [np.max(np.abs(neumann_partial_sum(p.interior, p.gain, n) - gain)) for n in checkpoints]
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))
    # the remaining tail is exactly Q^n (I - Q)^-1 r
    qn = np.linalg.matrix_power(p.interior, n_final)
    tail = gain - neumann_partial_sum(p.interior, p.gain, n_final)
    np.testing.assert_allclose(tail, qn @ gain, rtol=0, atol=1e-13)


def test_limit_power_examples(pair, ring3):
    lp = limit_power(pair, tau_lim=1e-12)
    np.testing.assert_allclose(lp.gain_column, consensus_gain(partition_stubborn(pair)).gain_column, atol=1e-12)
    lp = limit_power(ring3, tau_lim=1e-12)
    np.testing.assert_allclose(lp.gain_column, [1.0, 1.0], atol=1e-12)
    with pytest.raises(HypothesisViolated):
        limit_power(validate_trust_matrix(np.eye(3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.sampled_from(["one", "all"]))
def test_limit_power_agrees_with_gain_and_is_all_ones(K, seed, links):
    T = random_stubborn_instance(np.random.default_rng(seed), K, links=links)
    gain = consensus_gain(partition_stubborn(T)).gain_column
    lp = limit_power(T, tau_lim=1e-11)
    assert np.max(np.abs(lp.gain_column - gain)) <= 1e-8
    assert np.max(np.abs(gain - 1.0)) <= 1e-8
    assert np.all((gain >= 0) & (gain <= 1 + 1e-12))
