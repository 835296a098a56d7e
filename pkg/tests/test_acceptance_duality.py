import numpy as np
import pytest
from hypothesis import given, strategies as st

from assessix.acceptance import (check_family_axioms, family_to_index, index_to_family, level_grid,
                                 recovered_index_properties, roundtrip_check)
from assessix.errors import GridTooCoarse
from assessix.indices import dglr, entropic, weighted_var
from assessix.sampling import random_process, random_rv, random_space
from assessix.space import AdaptedProcess

seeds = st.integers(0, 2**32 - 1)


def top_level_oracle(space, t, values, grid):
    """Per cell, the largest grid level not exceeding alpha on every atom of the cell."""
    out = np.empty_like(values)
    for j in range(values.shape[0]):
        for idx in space.cells(t):
            best = -np.inf
            for m in grid:
                if all(values[j, a] >= m for a in idx):
                    best = max(best, m)
            out[j, idx] = best
    return out


def test_glr_family_membership(two_atoms):
    x = np.array([[2.0, -1.0]])
    fam = index_to_family(two_atoms, lambda X: dglr(two_atoms, X, 0), 0, [0, 0.5, 1, 1.5], x)
    table = fam.member[:, 0, 0]
    assert dict(zip(fam.levels.tolist(), table.tolist())) == {
        -np.inf: True, 0.0: True, 0.5: True, 1.0: True, 1.5: False, np.inf: False}
    assert family_to_index(fam).tolist() == [[1.0, 1.0]]


def test_sentinel_levels(two_atoms):
    x = np.array([[0.0, 0.0], [1.0, -3.0]])
    fam = index_to_family(two_atoms, lambda X: dglr(two_atoms, X, 0), 0, [0.5], x)
    assert family_to_index(fam)[0].tolist() == [np.inf, np.inf]  # accepted at every level
    assert family_to_index(fam)[1].tolist() == [-np.inf, -np.inf]  # alpha = 0 is below 0.5
    only_bottom = index_to_family(two_atoms, lambda X: np.full(X.shape, -np.inf), 0, [0.0], x)
    assert np.all(family_to_index(only_bottom) == -np.inf)
    assert level_grid([1.0, np.nan])[0] == -np.inf and level_grid([1.0])[-1] == np.inf


def test_constant_index_roundtrip(two_atoms, rng):
    pool = rng.normal(size=(10, 2))
    fam = index_to_family(two_atoms, lambda X: np.full(X.shape, 0.25), 0, [0.25, 1.0], pool)
    assert roundtrip_check(fam).passed
    assert np.all(family_to_index(fam) == 0.25)


def test_entropic_roundtrip_within_step(rng):
    S = random_space(rng, n_atoms=6, T=2)
    pool = random_rv(S, rng, 30)
    h = 0.1
    levels = np.arange(-10, 10 + h, h)
    fam = index_to_family(S, lambda X: entropic(S, X, 1), 1, levels, pool)
    rep = roundtrip_check(fam)
    assert rep.passed and rep.max_error <= h + 1e-12


def test_too_coarse_grid_raises(two_atoms, rng):
    pool = rng.normal(size=(5, 2))
    fam = index_to_family(two_atoms, lambda X: np.zeros(X.shape), 0, [-1.0, 0.0, 1.0, 2.0], pool)
    with pytest.raises(GridTooCoarse):
        roundtrip_check(fam, values=np.full((5, 2), 1.5))


@given(seeds)
def test_family_to_index_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng, max_atoms=6)
    t = int(rng.integers(0, S.T + 1))
    pool = random_rv(S, rng, 8)
    vals = entropic(S, pool, t)
    grid = level_grid(np.round(np.linspace(-3, 3, 13), 2))
    fam = index_to_family(S, lambda X: entropic(S, X, t), t, grid, pool)
    assert np.array_equal(family_to_index(fam), top_level_oracle(S, t, vals, fam.levels))


@pytest.mark.parametrize("name", ["dglr", "entropic", "weighted_var"])
@given(seed=seeds)
def test_shipped_families_satisfy_axioms(name, seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng, max_atoms=8, T=int(rng.integers(1, 4)))
    t = int(rng.integers(0, S.T))
    P = random_process(S, rng, 12, lattice=0.5)
    alpha = {"dglr": lambda X: dglr(S, X, t), "entropic": lambda X: entropic(S, X, t),
             "weighted_var": lambda X: weighted_var(S, X, t)}[name]
    vals = alpha(P)
    fam = index_to_family(S, alpha, t, np.unique(vals), P, name)
    assert roundtrip_check(fam).passed
    rep = check_family_axioms(fam, rng, n_pairs=15, n_lambda=9, n_monotone=8)
    assert rep.passed, rep.violations
    assert recovered_index_properties(fam, rng, n_lambda=9).passed
