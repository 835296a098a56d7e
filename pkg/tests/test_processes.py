from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from assessix.errors import InvariantViolation, NotPredictable
from assessix.indices import dglr_path, entropic
from assessix.processes import (D_to_gamma, Discounting, MartingaleDensity, RandomMeasure, TimeMeasure,
                                _d_paths, count_d_paths, dual_grid_processes, gamma_to_D, index_path, pairing,
                                process_dual_expectation, representation_consistency_check,
                                supermartingale_check)
from assessix.sampling import random_process, random_space
from assessix.space import AdaptedProcess, FilteredSpace, cond_expectation

seeds = st.integers(0, 2**32 - 1)


def chain(T):
    return FilteredSpace([1.0], [[[0]]] * (T + 1))


def random_discount(S, t, rng, dyadic=True):
    d = np.ones((S.T + 1, S.n_atoms))
    for s in range(t + 1, S.T + 1):
        k = len(S.cells(s - 1))
        step = rng.integers(0, 9, k) / 8.0 if dyadic else rng.random(k)
        d[s] = np.minimum(d[s - 1], step[S.labels(s - 1)])
    return Discounting(S, t, d)


def test_gamma_d_examples():
    S = chain(2)
    g = RandomMeasure(S, 0, [[0.5], [0.3], [0.2]])
    D = gamma_to_D(g)
    assert np.allclose(D.d.ravel(), [1.0, 0.5, 0.2])
    assert np.allclose(D_to_gamma(D).gamma, g.gamma, atol=1e-15)
    assert np.array_equal(gamma_to_D(RandomMeasure(S, 0, [[0], [0], [1]])).d.ravel(), [1, 1, 1])
    S3 = chain(3)
    assert np.array_equal(gamma_to_D(RandomMeasure(S3, 1, [[0], [1], [0], [0]])).d.ravel(), [1, 1, 0, 0])


def test_pairing_examples():
    S = chain(2)
    g = RandomMeasure(S, 0, [[0.5], [0.3], [0.2]])
    X = AdaptedProcess(S, [[1], [2], [4]])
    assert pairing(g, X, 0) == pytest.approx([1.9], abs=1e-15)
    assert pairing(g, AdaptedProcess(S, [[3], [3], [3]]), 0) == pytest.approx([3.0])
    assert pairing(Discounting(S, 0, np.ones((3, 1))), X, 0).tolist() == [4.0]


def test_process_dual_expectation_examples(e1):
    X = AdaptedProcess(e1, [[0, 0, 0, 0], [1, 1, -1, -1], [3, -1, -1, -5]])
    D = Discounting(e1, 1, [[1] * 4, [1] * 4, [0.5] * 4])
    Q = MartingaleDensity(e1, 1, np.ones(4))
    assert process_dual_expectation(Q, D, X, 1).tolist() == [1.0, 1.0, -2.0, -2.0]
    ones = Discounting(e1, 0, np.ones((3, 4)))
    P0 = MartingaleDensity(e1, 0, np.ones(4))
    assert np.allclose(process_dual_expectation(P0, ones, X, 0), cond_expectation(e1, X.values[2], 0))
    stop = gamma_to_D(RandomMeasure(e1, 1, [[0] * 4, [1] * 4, [0] * 4]))
    assert np.allclose(process_dual_expectation(Q, stop, X, 1), X.values[1])


def test_invariant_violations(e1):
    with pytest.raises(InvariantViolation):
        RandomMeasure(e1, 0, np.full((3, 4), 0.5))
    with pytest.raises(InvariantViolation):
        Discounting(e1, 0, [[1] * 4, [0.5] * 4, [0.7] * 4])
    with pytest.raises(NotPredictable):
        Discounting(e1, 0, [[1] * 4, [1] * 4, [0.5, 0.5, 0.2, 0.1]])
    with pytest.raises(InvariantViolation):
        MartingaleDensity(e1, 1, np.array([2.0, 0.0, 1.0, 0.5]))
    with pytest.raises(ValueError):
        TimeMeasure(e1, np.full((3, 4), 0.5))
    assert np.allclose(TimeMeasure.uniform(e1).mu, 1 / 3)


def test_extreme_point_grid(e1):
    pairs = dual_grid_processes(e1, 0, 1.0)
    for Q, D in pairs:
        assert set(np.unique(D.d)) <= {0.0, 1.0}
        assert np.count_nonzero(Q.z) == 1
    last = dual_grid_processes(e1, 2, 1.0)
    assert len(last) == 1 and np.all(last[0][1].d == 1.0)


@pytest.mark.parametrize("T,N", [(1, 1), (2, 2), (3, 4), (4, 3)])
def test_chain_path_count(T, N):
    for t in range(T + 1):
        L = T - t
        assert count_d_paths(chain(T), t, N) == comb(N + L, L)


@given(seeds)
def test_path_count_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng, max_atoms=5, max_T=3)
    t = int(rng.integers(0, S.T + 1))
    N = int(rng.integers(1, 3))
    paths = list(_d_paths(S, t, N))
    assert count_d_paths(S, t, N) == len(paths)
    assert len({p.tobytes() for p in paths}) == len(paths)
    for p in paths:
        Discounting(S, t, p)  # valid: predictable, decreasing, one up to t


@given(seeds)
def test_bijection_exact_on_dyadic(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng)
    t = int(rng.integers(0, S.T + 1))
    D = random_discount(S, t, rng)
    g = D_to_gamma(D)
    assert np.array_equal(gamma_to_D(g).d, D.d)
    assert np.array_equal(D_to_gamma(gamma_to_D(g)).gamma, g.gamma)


@given(seeds)
def test_bijection_and_pairing_general(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng)
    t = int(rng.integers(0, S.T + 1))
    D = random_discount(S, t, rng, dyadic=False)
    g = D_to_gamma(D)
    assert np.max(np.abs(gamma_to_D(g).d - D.d)) <= 1e-15
    X = random_process(S, rng)
    a = pairing(g, X, t)
    b = X.values[t] + (D.d[t + 1:] * np.diff(X.values[t:], axis=0)).sum(axis=0)
    assert np.max(np.abs(a - b)) <= 1e-12


@given(seeds)
def test_supermartingale_on_generated_pairs(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng, max_atoms=5, max_T=3)
    t = int(rng.integers(0, S.T + 1))
    for Q, D in dual_grid_processes(S, t, 0.5, max_pairs=50_000):
        assert supermartingale_check(Q, D).passed


def test_representation_consistency(e1, rng):
    pool = [random_process(e1, rng) for _ in range(5)]
    for t in range(3):
        path = lambda S, X, t: index_path(S, entropic, X, t)
        assert representation_consistency_check(e1, path, pool, t, rng).passed
        assert representation_consistency_check(e1, dglr_path, pool, t, rng).passed
    leaky = lambda S, X, t: np.repeat(X.values.sum(axis=0)[None], S.T + 1, axis=0)
    assert not representation_consistency_check(e1, leaky, pool, 2, rng).passed
