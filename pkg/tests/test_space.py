import numpy as np
import pytest
from hypothesis import given, strategies as st

from assessix.errors import InvalidSpace, NotAPartition, NotAdapted, NotMeasurable, ZeroCellMass
from assessix.indices import INDEX_NAMES, get_index
from assessix.sampling import random_process, random_rv, random_space
from assessix.space import (AdaptedProcess, CondValue, FilteredSpace, check_local, cond_expectation,
                            cond_extremum, glue)

seeds = st.integers(0, 2**32 - 1)


def brute_cond_expectation(space, x, level, w=None):
    """Loop-based oracle: weighted cell average, atom by atom."""
    w = np.ones(space.n_atoms) if w is None else w
    out = np.empty(space.n_atoms)
    for a in range(space.n_atoms):
        cell = [b for b in range(space.n_atoms) if space.labels(level)[b] == space.labels(level)[a]]
        num = sum(space.probs[b] * w[b] * x[b] for b in cell)
        den = sum(space.probs[b] * w[b] for b in cell)
        out[a] = num / den
    return out


def test_cond_expectation_cell_averages(e1):
    x = np.array([4.0, 2.0, 6.0, 0.0])
    assert cond_expectation(e1, x, 1).tolist() == [3.0, 3.0, 3.0, 3.0]
    assert cond_expectation(e1, x, 2).tolist() == x.tolist()
    assert np.allclose(cond_expectation(e1, np.full(4, 7.5), 0), 7.5)


def test_cond_extremum_examples(e1):
    x = np.array([4.0, 2.0, 6.0, 0.0])
    assert cond_extremum(e1, x, 1, "sup").tolist() == [4, 4, 6, 6]
    y = np.array([-np.inf, 2.0, 6.0, 0.0])
    assert cond_extremum(e1, y, 1, "inf").tolist() == [-np.inf, -np.inf, 0, 0]


def test_weighted_zero_mass_raises(e1):
    with pytest.raises(ZeroCellMass):
        cond_expectation(e1, np.array([1.0, 2.0, 3.0, 4.0]), 1, weights=np.array([0, 0, 1, 1.0]))


def test_glue_examples(e1):
    out = glue(e1, [([0, 1], np.full(4, 7.0)), ([2, 3], np.full(4, 9.0))], 1)
    assert out.tolist() == [7, 7, 9, 9]
    x = np.array([1.0, 1.0, 5.0, 5.0])
    assert glue(e1, [([0, 1, 2, 3], x)], 1).tolist() == x.tolist()
    with pytest.raises(NotAPartition):
        glue(e1, [([0, 1], x)], 1)
    with pytest.raises(NotMeasurable):
        glue(e1, [([0], x), ([1, 2, 3], x)], 1)


def test_space_validation():
    with pytest.raises(InvalidSpace):
        FilteredSpace([0.5, 0.6], [[[0, 1]]])
    with pytest.raises(InvalidSpace):
        FilteredSpace([1.0, 0.0], [[[0, 1]]])
    with pytest.raises((InvalidSpace, NotAPartition)):
        FilteredSpace([0.5, 0.5], [[[0], [1]], [[0, 1]]])


def test_adaptedness_and_condvalue(e1):
    with pytest.raises(NotAdapted, match="row 1"):
        AdaptedProcess(e1, [[0, 0, 0, 0], [1, 2, 3, 3], [0, 0, 0, 0]])
    with pytest.raises(NotMeasurable):
        CondValue(e1, 1, np.array([1.0, 2.0, 3.0, 3.0]))


def test_check_local_flags_global_mean(e1):
    rep = check_local(lambda x: np.full(4, np.mean(x)), e1, 1, [np.array([1.0, 1.0, 5.0, 5.0])])
    assert not rep.passed and rep.violations
    assert check_local(lambda x: cond_expectation(e1, x, 1), e1, 1, [np.arange(4.0)]).passed


@given(seeds)
def test_cond_expectation_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng, max_atoms=9)
    x = random_rv(S, rng)
    w = rng.random(S.n_atoms) + 0.1
    for t in range(S.T + 1):
        assert np.allclose(cond_expectation(S, x, t), brute_cond_expectation(S, x, t), atol=1e-12)
        assert np.allclose(cond_expectation(S, x, t, weights=w), brute_cond_expectation(S, x, t, w), atol=1e-12)


@given(seeds)
def test_tower_and_sandwich(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng)
    x = random_rv(S, rng)
    for t in range(S.T):
        inner = cond_expectation(S, cond_expectation(S, x, t + 1), t)
        assert np.max(np.abs(inner - cond_expectation(S, x, t))) <= 1e-12
        e = cond_expectation(S, x, t)
        assert np.all(cond_extremum(S, x, t, "sup") >= e - 1e-12)
        assert np.all(e >= cond_extremum(S, x, t, "inf") - 1e-12)


@given(seeds)
def test_glue_idempotent(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng)
    t = int(rng.integers(0, S.T + 1))
    x = cond_expectation(S, random_rv(S, rng), t)
    parts = [(idx.tolist(), x) for idx in S.cells(t)]
    assert np.array_equal(glue(S, parts, t), x)


@given(seeds)
def test_shipped_indices_are_local(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng, max_atoms=8, T=int(rng.integers(1, 4)))
    pool = [random_process(S, rng) for _ in range(3)]
    for name in INDEX_NAMES:
        idx = get_index(name)
        t = int(rng.integers(0, S.T))
        assert check_local(lambda X: idx(S, X, t), S, t, pool).passed, name
