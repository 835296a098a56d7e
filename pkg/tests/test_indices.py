import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from assessix.errors import GridExhausted, NonMonotoneFamily, UnknownIndex
from assessix.indices import (DISTORTIONS, MAXVAR, MINVAR, Distortion, default_m_grid, dglr, dglr_dual_risk,
                              dglr_path, dglr_regions, distorted_expectation, entropic, exponential_utility,
                              get_index, oce, oce_dual_risk, past_weights, path_dependent_index,
                              quadratic_utility, shortfall_utility, weighted_var)
from assessix.sampling import random_process, random_rv, random_space
from assessix.space import AdaptedProcess, FilteredSpace, cond_expectation

seeds = st.integers(0, 2**32 - 1)


def distorted_oracle(probs, x, phi):
    """Loop oracle: Choquet integral of x against phi of the distribution function."""
    order = sorted(range(len(x)), key=lambda i: x[i])
    total, F_prev = 0.0, 0.0
    for i in order:
        F = F_prev + probs[i]
        total += x[i] * (phi(min(F, 1.0)) - phi(F_prev))
        F_prev = F
    return total


def oce_oracle(probs, x, u):
    """Bounded scalar maximization of m + E[u(x - m)]."""
    res = minimize_scalar(lambda m: -(m + np.dot(probs, u(x - m))), bounds=(x.min() - 1, x.max() + 1),
                          method="bounded", options={"xatol": 1e-12})
    return -res.fun


# ---------------------------------------------------------------- dGLR

def test_dglr_examples(two_atoms, e1):
    assert dglr(two_atoms, np.array([2.0, -1.0]), 0).tolist() == [1.0, 1.0]
    assert np.all(dglr(two_atoms, np.zeros(2), 0) == np.inf)
    x = np.array([2.0, -1.0, -3.0, -3.0])
    assert dglr(e1, x, 1).tolist() == [1.0, 1.0, 0.0, 0.0]
    assert dglr_regions(e1, x, 1).tolist() == [1, 1, 3, 3]
    assert dglr_regions(e1, np.array([0.0, 0.0, 1.0, -1.0]), 1).tolist() == [2, 2, 3, 3]


def test_dglr_process_form(e1):
    X = AdaptedProcess(e1, [[0, 0, 0, 0], [1, 1, -1, -1], [1, -2, -2, -2]])
    # cumulative flows from t = 1: (2, -1, -3, -3)
    assert dglr(e1, X, 1).tolist() == [1.0, 1.0, 0.0, 0.0]
    path = dglr_path(e1, X, 1)
    assert np.all(path[0] == np.inf) and path[1].tolist() == path[2].tolist() == [1.0, 1.0, 0.0, 0.0]


def test_dglr_dual_risk_examples():
    S = FilteredSpace([0.5, 0.5], [[[0, 1]]])
    assert dglr_dual_risk(S, 0, np.array([1.0, 3.0]), np.array([-1.0, -1.0])).tolist() == [2.0, 2.0]
    assert dglr_dual_risk(S, 0, np.array([2.0, 2.0]), np.array([-3.0, -3.0])).tolist() == [0.0, 0.0]
    assert np.all(dglr_dual_risk(S, 0, np.array([1.0, 3.0]), np.array([0.5, 0.5])) == np.inf)
    assert np.all(dglr_dual_risk(S, 0, np.array([0.0, 2.0]), np.array([-1.0, -1.0])) == np.inf)


@given(seeds)
def test_dglr_matches_cell_loop(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng)
    t = int(rng.integers(0, S.T + 1))
    x = random_rv(S, rng, lattice=0.5)
    got = dglr(S, x, t)
    for idx in S.cells(t):
        p = S.probs[idx] / S.probs[idx].sum()
        v = x[idx]
        num, den = float(p @ v), float(p @ np.maximum(-v, 0))
        want = np.inf if np.all(v == 0) else (0.0 if num <= 0 else (np.inf if den == 0 else num / den))
        assert np.allclose(got[idx], want, rtol=1e-12)


# ---------------------------------------------------------------- OCE

def test_oce_examples(two_atoms):
    assert np.allclose(oce(two_atoms, np.zeros(2), 0), 0.0, atol=1e-12)
    v = oce(two_atoms, np.array([0.0, np.log(3.0)]), 0)
    assert np.allclose(v, np.log(1.5), atol=1e-6)
    assert np.allclose(oce(two_atoms, np.full(2, 4.2), 0), 4.2, atol=1e-9)
    S = FilteredSpace([0.5, 0.5], [[[0, 1]], [[0], [1]]])
    X = AdaptedProcess(S, [[0, 0], [0, np.log(3.0)]])
    assert np.allclose(oce(S, X, 1), [0.0, np.log(3.0)], atol=1e-9)


def test_oce_user_grid_exhausted(two_atoms):
    with pytest.raises(GridExhausted):
        oce(two_atoms, np.array([5.0, 6.0]), 0, m_grid=[-1.0, 0.0, 1.0])


@pytest.mark.parametrize("utility", [exponential_utility(0.7), shortfall_utility(0.25), quadratic_utility()],
                         ids=lambda u: u.name)
@given(seed=seeds)
def test_oce_matches_scalar_optimizer(utility, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    S = FilteredSpace(rng.dirichlet(np.ones(n)).tolist(), [[list(range(n))]])
    S = FilteredSpace((S.probs / S.probs.sum()).tolist(), [[list(range(n))]])
    x = rng.normal(0, 2, n)
    assert abs(oce(S, x, 0, utility)[0] - oce_oracle(S.probs, x, utility.u)) <= 1e-6


@given(seeds)
def test_oce_exponential_is_entropic_and_cash_additive(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng, T=int(rng.integers(1, 4)))
    X = random_process(S, rng)
    t = int(rng.integers(0, S.T + 1))
    a = oce(S, X, t)
    assert np.max(np.abs(a - entropic(S, X, t))) <= 1e-6
    c = float(rng.normal())
    v = X.values.copy()
    v[t:] += c
    assert np.max(np.abs(oce(S, X.with_values(v), t) - a - c)) <= 2e-6


def test_oce_process_dual_by_brute_force():
    """Minimize the process dual over (z, gamma_0) on two atoms, one period."""
    S = FilteredSpace([0.5, 0.5], [[[0, 1]], [[0], [1]]])
    X = AdaptedProcess(S, [[0.3, 0.3], [1.0, -0.5]])
    u = exponential_utility(1.0)
    best = np.inf
    for q in np.linspace(0.001, 0.999, 999):
        z = np.array([2 * q, 2 * (1 - q)])
        for g0 in np.linspace(0.0, 1.0, 201):
            gam = np.array([[g0, g0], [1 - g0, 1 - g0]])
            s = cond_expectation(S, z * (gam * X.values).sum(axis=0), 0)
            best = min(best, oce_dual_risk(S, 0, u, z, s, gamma=gam)[0])
    assert abs(best - entropic(S, X, 0)[0]) <= 1e-3
    assert best >= entropic(S, X, 0)[0] - 1e-12


# ---------------------------------------------------------------- weighted V@R

def test_minvar_two_point(two_atoms):
    x = np.array([1.0, -1.0])
    assert weighted_var(two_atoms, x, 0).tolist() == [0.0, 0.0]
    m = np.array([0.0, 1.0, 3.0])
    de = distorted_expectation(two_atoms, x, 0, MINVAR, m)
    assert np.allclose(de[:, 0], 2.0 ** -m - 1.0, atol=1e-15)


def test_weighted_var_sentinels(two_atoms):
    assert np.all(weighted_var(two_atoms, np.array([1.0, 0.0]), 0) == np.inf)
    assert np.all(weighted_var(two_atoms, np.array([1.0, -3.0]), 0) == -np.inf)
    with pytest.raises(GridExhausted):
        weighted_var(two_atoms, np.array([10.0, -0.001]), 0, m_grid=[0.0, 0.5, 1.0])
    convex = Distortion("convex", lambda m, a: a ** (1.0 + m))
    with pytest.raises(NonMonotoneFamily):
        weighted_var(two_atoms, np.array([1.0, -0.5]), 0, dist=convex, m_grid=[0.0, 1.0, 2.0])


@pytest.mark.parametrize("dist", list(DISTORTIONS.values()), ids=list(DISTORTIONS))
def test_distortion_axioms(dist):
    assert dist.check_axioms(m_grid=default_m_grid(2.0 ** -6, 2.0 ** 10)).passed
    assert default_m_grid()[0] == 0.0 and default_m_grid()[-1] == 2.0 ** 20


@pytest.mark.parametrize("dist", [MINVAR, MAXVAR], ids=["minvar", "maxvar"])
@given(seed=seeds)
def test_distorted_expectation_oracle(dist, seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng)
    t = int(rng.integers(0, S.T + 1))
    x = random_rv(S, rng, lattice=0.25)
    m = np.array([0.0, 0.5, 3.0])
    de = distorted_expectation(S, x, t, dist, m)
    assert np.max(np.abs(de[0] - cond_expectation(S, x, t))) <= 1e-12
    assert np.all(np.diff(de, axis=0) <= 1e-12)
    for idx in S.cells(t):
        p = S.probs[idx] / S.probs[idx].sum()
        for k, mk in enumerate(m):
            want = distorted_oracle(p, x[idx], lambda a: float(dist(mk, a)))
            assert abs(de[k, idx[0]] - want) <= 1e-12


@given(seeds)
def test_weighted_var_scale_invariant_and_monotone(seed):
    rng = np.random.default_rng(seed)
    S = random_space(rng)
    t = int(rng.integers(0, S.T + 1))
    x = random_rv(S, rng, lattice=0.5)
    base = weighted_var(S, x, t)
    assert np.array_equal(weighted_var(S, 4.0 * x, t), base)
    assert np.all(weighted_var(S, x + np.abs(random_rv(S, rng)), t) >= base)


# ---------------------------------------------------------------- path dependence

def test_path_dependent_examples(e1):
    X = AdaptedProcess(e1, [[1, 1, 1, 1], [1.08, 1.08, 0.5, 0.5], [2, 1, 0, 1]])
    fut = lambda S, Y, t: entropic(S, Y, t)
    stopped = X.values.copy()
    stopped[:2] = 0
    pure = entropic(e1, X.with_values(stopped), 2)
    assert np.allclose(path_dependent_index(e1, X, 2, fut, "zeros"), pure)
    assert np.allclose(path_dependent_index(e1, X, 2, fut, "ones"), X.values[1] + pure)
    w = past_weights(e1, X, 2, "return")
    assert w[1, 0] == pytest.approx(np.exp(0.08 - 0.08 / 1.08))
    Y = AdaptedProcess(e1, [[1, 1, 1, 1], [1.08, 1.08, 1.08, 1.08], [0, 0, 0, 0]])
    Y1 = Y.with_values(np.vstack([[1.0] * 4, [1.08] * 4, [1.08] * 4]))
    # X_1 = 1 with increment 0.08 into t = 2 gives weight exactly one
    Z = AdaptedProcess(e1, [[0.92, 0.92, 0.92, 0.92], [1, 1, 1, 1], [1.08, 1.08, 1.08, 1.08]])
    dx = Z.increments()
    assert np.exp(0.08 - dx[2, 0] / Z.values[1, 0]) == pytest.approx(1.0)
    zero = AdaptedProcess(e1, [[0, 0, 0, 0], [1, 1, 1, 1], [1, 1, 1, 1]])
    assert np.all(past_weights(e1, zero, 2, "return")[0] == 1.0)
    with pytest.raises(ZeroDivisionError):
        past_weights(e1, zero, 2, "return", zero_policy="raise")
    del Y1


def test_registry():
    for name in ("dglr", "entropic", "oce", "weighted_var"):
        spec = get_index(name)
        assert spec.describe()["name"] == name
    assert get_index("dglr").scale_invariant and get_index("entropic").cash_additive
    with pytest.raises(UnknownIndex):
        get_index("sharpe")
    with pytest.raises(UnknownIndex):
        get_index("oce", utility="log")
