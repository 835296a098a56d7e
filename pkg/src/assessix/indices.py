"""Concrete assessment indices.

Every index is a function ``f(space, X, t, ...)`` returning per-atom values
measurable at level ``t``.  ``X`` is either a random variable (a plain array
whose last axis runs over atoms) or an :class:`AdaptedProcess`; for processes
the future window ``[t, T]`` enters through the product measure ``P x mu``
(uniform ``mu`` unless given).  Leading batch axes are supported throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import xlogy

from .errors import GridExhausted, NonMonotoneFamily, UnknownIndex
from .extended import INF, NINF
from .space import AdaptedProcess, FilteredSpace, cond_expectation, cond_extremum

# ---------------------------------------------------------------------------
# outcome views


class _Outcomes:
    """Conditional law of a position given ``F_t`` under the relevant measure.

    Holds values of shape ``(..., L, n)`` and weights ``(L, n)``: for processes
    ``L`` runs over the time window, for random variables ``L = 1``.
    """

    def __init__(self, space: FilteredSpace, X, t: int, window: str = "from_t", mu=None):
        self.space = space
        self.t = t
        if isinstance(X, AdaptedProcess):
            start = t if window == "from_t" else t + 1
            if start > space.T:
                raise ValueError(f"empty time window starting at {start}")
            self.values = X.values[..., start:, :]
            if mu is None:
                self.weights = np.ones(self.values.shape[-2:])
            else:
                self.weights = np.asarray(mu, dtype=float)[start:, :]
        else:
            x = np.asarray(X, dtype=float)
            self.values = x[..., None, :]
            self.weights = np.ones((1, space.n_atoms))
        self._den = cond_expectation(space, self.weights.sum(axis=0), t)

    def expect(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        num = (self.weights * f(self.values)).sum(axis=-2)
        return cond_expectation(self.space, num, self.t) / self._den

    def cell_min(self) -> np.ndarray:
        return cond_extremum(self.space, self.values.min(axis=-2), self.t, "inf")

    def cell_max(self) -> np.ndarray:
        return cond_extremum(self.space, self.values.max(axis=-2), self.t, "sup")


def cumulative_future(X, t: int) -> np.ndarray:
    """``sum_{s=t}^T X_s`` for processes; the variable itself otherwise."""
    if isinstance(X, AdaptedProcess):
        return X.values[..., t:, :].sum(axis=-2)
    return np.asarray(X, dtype=float)


# ---------------------------------------------------------------------------
# gain-to-loss ratio


def dglr_regions(space: FilteredSpace, X, t: int) -> np.ndarray:
    """Region label per atom: 1 (positive mean), 2 (null position), 3 (rest)."""
    xt = cumulative_future(X, t)
    num = cond_expectation(space, xt, t)
    nonzero = cond_extremum(space, (xt != 0).astype(float), t, "sup")
    region = np.where(num > 0, 1, 3)
    return np.where(nonzero == 0, 2, region)


def dglr(space: FilteredSpace, X, t: int) -> np.ndarray:
    """Dynamic gain-to-loss ratio at level ``t``.

    ``E[S | F_t] / E[S^- | F_t]`` where ``S`` is the cumulative cash flow from
    ``t`` on, set to ``+inf`` where ``S`` vanishes identically on the cell or
    the expected loss is zero, and to ``0`` where the expected gain is not
    positive.

    >>> S = FilteredSpace([0.5, 0.5], [[[0, 1]]])
    >>> dglr(S, [2.0, -1.0], 0).tolist()
    [1.0, 1.0]
    """
    xt = cumulative_future(X, t)
    num = cond_expectation(space, xt, t)
    den = cond_expectation(space, np.maximum(-xt, 0.0), t)
    region = dglr_regions(space, X, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), INF)
    out = np.where(region == 1, ratio, 0.0)
    return np.where(region == 2, INF, out)


def dglr_path(space: FilteredSpace, X: AdaptedProcess, t: int) -> np.ndarray:
    """Process-valued form: ``+inf`` before ``t`` and the ratio from ``t`` on."""
    g = dglr(space, X, t)
    out = np.repeat(g[..., None, :], space.T + 1, axis=-2)
    out[..., :t, :] = INF
    return out


def dglr_dual_risk(space: FilteredSpace, t: int, z, s) -> np.ndarray:
    """Dual risk function of the ratio: ``b/a - 1`` on ``{-inf < s < 0}``.

    ``a`` and ``b`` are the cellwise minimum and maximum of the density.  A
    density vanishing on the whole cell gives ``-inf`` there for negative ``s``.
    """
    z = np.asarray(z, dtype=float)
    s = np.asarray(s, dtype=float)
    a = cond_extremum(space, z, t, "inf")
    b = cond_extremum(space, z, t, "sup")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(a > 0, b / np.where(a > 0, a, 1.0) - 1.0, INF)
    r = np.where(b == 0, NINF, r)
    r = np.broadcast_to(r, np.broadcast_shapes(r.shape, s.shape))
    out = np.where(s >= 0, INF, r)
    return np.where(s == NINF, NINF, out)


def glr_polar_member(space: FilteredSpace, t: int, m, z) -> np.ndarray:
    """Membership of ``z`` in the polar of the level-``m`` ratio acceptance cone.

    The polar is ``{z : c <= z <= c (m + 1) for some F_t-measurable c >= 0}``.
    """
    z = np.asarray(z, dtype=float)
    m = np.asarray(m, dtype=float)
    a = cond_extremum(space, z, t, "inf")
    b = cond_extremum(space, z, t, "sup")
    with np.errstate(invalid="ignore"):
        ok = (a > 0) & (m >= 0) & (b <= a * (m + 1.0))
    return ok | (b == 0)


# ---------------------------------------------------------------------------
# optimized certainty equivalents


@dataclass(frozen=True)
class Utility:
    """Concave utility ``u`` with ``u(0) = 0`` and ``1`` in its superdifferential at 0.

    ``conjugate`` is the convex conjugate of ``x -> -u(-x)``, used by the dual
    risk function.
    """

    name: str
    u: Callable[[np.ndarray], np.ndarray]
    conjugate: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.u(x)


def exponential_utility(gamma: float = 1.0) -> Utility:
    g = float(gamma)
    if not g > 0:
        raise ValueError("risk aversion must be positive")

    def u(x):
        return -np.expm1(-g * np.asarray(x, dtype=float)) / g

    def conj(y):
        y = np.asarray(y, dtype=float)
        with np.errstate(invalid="ignore"):
            return np.where(y >= 0, (xlogy(y, y) - y + 1.0) / g, INF)

    return Utility("exponential", u, conj, {"gamma": g})


def shortfall_utility(beta: float) -> Utility:
    """``u(x) = -max(-x, 0) / beta``; its OCE is the expected shortfall at ``beta``."""
    b = float(beta)
    if not 0 < b <= 1:
        raise ValueError("beta must lie in (0, 1]")

    def u(x):
        return -np.maximum(-np.asarray(x, dtype=float), 0.0) / b

    def conj(y):
        y = np.asarray(y, dtype=float)
        return np.where((y >= 0) & (y <= 1.0 / b), 0.0, INF)

    return Utility("shortfall", u, conj, {"beta": b})


def quadratic_utility() -> Utility:
    """``u(x) = x - x^2 / 2`` below 1, constant ``1/2`` above."""

    def u(x):
        x = np.minimum(np.asarray(x, dtype=float), 1.0)
        return x - 0.5 * x * x

    def conj(y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= 0, 0.5 * (y - 1.0) ** 2, INF)

    return Utility("quadratic", u, conj, {})


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def oce(space: FilteredSpace, X, t: int, utility: Utility | None = None, m_grid=None,
        mu=None, tol: float = 1e-10, n_grid: int = 41, return_argmax: bool = False):
    """Optimized certainty equivalent ``sup_m {m + E[u(X - m) | F_t]}``.

    The supremum over ``F_t``-measurable ``m`` splits into one concave program
    per cell.  A coarse pass over ``m_grid`` (by default spanning the cell's
    outcome range, which contains every maximizer) locates a bracket that is
    then narrowed by golden-section search down to ``tol``.

    Raises
    ------
    GridExhausted
        If the maximizer lies on the edge of a user-supplied grid.
    """
    u = exponential_utility(1.0) if utility is None else utility
    out = _Outcomes(space, X, t, "from_t", mu)
    lo, hi = out.cell_min(), out.cell_max()

    def g(m):
        return m + out.expect(lambda v: u(v - m[..., None, :]))

    if m_grid is None:
        pad = 0.05 * np.maximum(hi - lo, 1.0)
        steps = np.linspace(0.0, 1.0, n_grid)
        grid = (lo - pad)[..., None, :] + steps[:, None] * ((hi - lo) + 2 * pad)[..., None, :]
        user = False
    else:
        mg = np.sort(np.asarray(m_grid, dtype=float))
        if mg.ndim != 1 or mg.size < 3:
            raise ValueError("m_grid must be a 1-d grid with at least 3 points")
        grid = np.broadcast_to(mg[:, None], lo.shape[:-1] + (mg.size, lo.shape[-1]))
        user = True
    vals = np.stack([g(grid[..., k, :]) for k in range(grid.shape[-2])], axis=-2)
    k = np.argmax(vals, axis=-2)
    K = grid.shape[-2]
    a = np.take_along_axis(grid, np.maximum(k - 1, 0)[..., None, :], axis=-2)[..., 0, :]
    b = np.take_along_axis(grid, np.minimum(k + 1, K - 1)[..., None, :], axis=-2)[..., 0, :]
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    for _ in range(200):
        if np.max(b - a) <= tol:
            break
        left = gc >= gd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        x_new = np.where(left, b - _GOLDEN * (b - a), a + _GOLDEN * (b - a))
        g_new = g(x_new)
        c, d, gc, gd = (np.where(left, x_new, d), np.where(left, c, x_new),
                        np.where(left, g_new, gd), np.where(left, gc, g_new))
    m_star = 0.5 * (a + b)
    best = g(m_star)
    kbest = np.take_along_axis(vals, k[..., None, :], axis=-2)[..., 0, :]
    m_grid_best = np.take_along_axis(grid, k[..., None, :], axis=-2)[..., 0, :]
    use_grid = kbest > best
    value = np.where(use_grid, kbest, best)
    m_star = np.where(use_grid, m_grid_best, m_star)
    if user:
        edge = ((k == 0) | (k == K - 1))
        first, last = grid[..., 0, :], grid[..., -1, :]
        at_edge = edge & ((np.abs(m_star - first) <= 10 * tol) | (np.abs(m_star - last) <= 10 * tol))
        if np.any(at_edge):
            raise GridExhausted("OCE maximizer sits on the boundary of the m-grid")
    return (value, m_star) if return_argmax else value


def entropic(space: FilteredSpace, X, t: int, gamma: float = 1.0, mu=None) -> np.ndarray:
    """Closed form ``-(1/gamma) log E[exp(-gamma X) | F_t]``.

    Computed with the cellwise minimum factored out so nothing overflows.
    """
    out = _Outcomes(space, X, t, "from_t", mu)
    shift = out.cell_min()
    e = out.expect(lambda v: np.exp(-gamma * (v - shift[..., None, :])))
    return shift - np.log(e) / gamma


def oce_dual_risk(space: FilteredSpace, t: int, utility: Utility, z, s, gamma=None, mu=None) -> np.ndarray:
    """Dual risk function of the OCE: ``s`` plus the divergence of the dual pair.

    For random variables this is ``s + E[phi(z) | F_t]``.  For processes the
    pair is a terminal density ``z`` with an optional random measure ``gamma``
    on ``[t, T]``; the divergence is taken against the time-normalized
    product measure, ``E[sum_k nu_k phi(M_k gamma_k / nu_k) | F_t]`` with
    ``nu_k = mu_k / E[sum_{r >= t} mu_r | F_t]`` and ``M_k = E[z | F_k]``.
    """
    z = np.asarray(z, dtype=float)
    s = np.asarray(s, dtype=float)
    if gamma is None:
        pen = cond_expectation(space, utility.conjugate(z), t)
        return s + pen
    g = np.asarray(gamma, dtype=float)
    T = space.T
    w = np.ones((T + 1, space.n_atoms)) if mu is None else np.asarray(mu, dtype=float)
    den = cond_expectation(space, w[t:].sum(axis=0), t)
    pen = 0.0
    for k in range(t, T + 1):
        Mk = cond_expectation(space, z, k)
        nu = w[k] / den
        pen = pen + nu * utility.conjugate(Mk * g[..., k, :] / nu)
    return s + cond_expectation(space, pen, t)


# ---------------------------------------------------------------------------
# weighted V@R


@dataclass(frozen=True)
class Distortion:
    """Family ``phi(m, a)`` of concave distortions of ``[0, 1]`` indexed by ``m >= 0``."""

    name: str
    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, m, a):
        return self.phi(np.asarray(m, dtype=float), np.asarray(a, dtype=float))

    def check_axioms(self, m_grid=None, a_grid=None, tol: float = 1e-12):
        """Normalization, monotonicity, concavity in ``a`` and growth in ``m`` on grids."""
        from ._report import CheckReport

        m = np.asarray(default_m_grid() if m_grid is None else m_grid, dtype=float)
        a = np.linspace(0.0, 1.0, 101) if a_grid is None else np.asarray(a_grid, dtype=float)
        v = self(m[:, None], a[None, :])
        viol = []
        if np.any(np.abs(v[:, 0]) > tol) or np.any(np.abs(v[:, -1] - 1.0) > tol):
            viol.append({"axiom": "normalized"})
        if np.any(np.diff(v, axis=1) < -tol):
            viol.append({"axiom": "increasing"})
        if a.size > 2 and np.any(v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2] > tol * 10):
            if np.allclose(np.diff(a), a[1] - a[0]):
                viol.append({"axiom": "concave"})
        if np.any(np.diff(v, axis=0) < -tol):
            viol.append({"axiom": "increasing in m"})
        return CheckReport(f"distortion:{self.name}", not viol, v.size, 0.0, viol)


MINVAR = Distortion("minvar", lambda m, a: 1.0 - (1.0 - a) ** (1.0 + m))
MAXVAR = Distortion("maxvar", lambda m, a: a ** (1.0 / (1.0 + m)))
DISTORTIONS = {"minvar": MINVAR, "maxvar": MAXVAR}


def default_m_grid(h: float = 2.0 ** -10, m_max: float = 2.0 ** 20) -> np.ndarray:
    """``{0} U {h 2^k}`` up to ``m_max``."""
    k = int(np.floor(np.log2(m_max / h)))
    return np.concatenate([[0.0], h * 2.0 ** np.arange(k + 1)])


def _cell_laws(space: FilteredSpace, X, t: int, mu=None):
    """Yield ``(atom indices, values (..., K), weights (K,))`` per level-``t`` cell."""
    out = _Outcomes(space, X, t, "after_t" if isinstance(X, AdaptedProcess) else "from_t", mu)
    for idx in space.cells(t):
        vals = out.values[..., :, idx]
        w = out.weights[:, idx] * space.probs[idx][None, :]
        vals = vals.reshape(vals.shape[:-2] + (-1,))
        w = w.reshape(-1)
        yield idx, vals, w / w.sum()


def distorted_expectation(space: FilteredSpace, X, t: int, dist: Distortion, m) -> np.ndarray:
    """``sum_i x_(i) [phi_m(F_i) - phi_m(F_{i-1})]`` per cell, for each ``m``.

    Returns an array of shape ``(..., len(m), n)``.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    res = None
    for idx, vals, w in _cell_laws(space, X, t):
        order = np.argsort(vals, axis=-1, kind="stable")
        xs = np.take_along_axis(vals, order, axis=-1)
        ws = w[order]
        F = np.clip(np.cumsum(ws, axis=-1), 0.0, 1.0)
        F[..., -1] = 1.0
        Fp = np.concatenate([np.zeros(F.shape[:-1] + (1,)), F[..., :-1]], axis=-1)
        mm = m.reshape((1,) * (xs.ndim - 1) + (-1, 1))
        dw = dist(mm, F[..., None, :]) - dist(mm, Fp[..., None, :])
        val = (xs[..., None, :] * dw).sum(axis=-1)
        if res is None:
            res = np.empty(val.shape + (space.n_atoms,))
        res[..., idx] = val[..., None]
    return res


def weighted_var(space: FilteredSpace, X, t: int, dist: Distortion = MINVAR, m_grid=None,
                 check_monotone: bool = True) -> np.ndarray:
    """Largest grid level ``m`` whose distorted expectation is nonnegative.

    ``+inf`` on cells where every outcome is nonnegative, ``-inf`` where even
    ``m = 0`` fails.  For processes the law is that of ``X`` on ``(t, T]``
    under the product measure.  The acceptance test uses the same
    distortion ``phi_m`` that defines the family.

    Raises
    ------
    NonMonotoneFamily
        If the distorted expectation increases somewhere along the grid.
    GridExhausted
        If the largest grid level still passes on a cell with a loss.
    """
    grid = default_m_grid() if m_grid is None else np.sort(np.asarray(m_grid, dtype=float))
    if grid[0] != 0.0:
        grid = np.concatenate([[0.0], grid[grid > 0]])
    de = distorted_expectation(space, X, t, dist, grid)
    if check_monotone:
        scale = np.maximum(1.0, np.abs(de).max(axis=-2, keepdims=True))
        if np.any(np.diff(de, axis=-2) > 1e-12 * scale):
            raise NonMonotoneFamily(f"distorted expectation of {dist.name} increases in m")
    ok = de >= 0
    n_ok = ok.sum(axis=-2)
    top = grid[np.maximum(n_ok - 1, 0)]
    out = np.where(n_ok == 0, NINF, top)
    worst = np.full(out.shape, INF)
    for idx, vals, w in _cell_laws(space, X, t):
        worst[..., idx] = vals.min(axis=-1)[..., None]
    out = np.where(worst >= 0, INF, out)
    if np.any((n_ok == grid.size) & (worst < 0)):
        raise GridExhausted("acceptability level exceeds the top of the m-grid")
    return out


# ---------------------------------------------------------------------------
# path dependence


def past_weights(space: FilteredSpace, X: AdaptedProcess, t: int, policy="zeros",
                 zero_policy: str = "clamp", rate: float = 0.08) -> np.ndarray:
    """Weights ``D'_k`` for ``k < t``.

    ``policy`` is ``"zeros"``, ``"ones"``, ``"return"`` (``exp(rate - dX_k / X_k)``)
    or an explicit array of shape ``(..., T+1, n)``.  With ``"return"``,
    ``zero_policy`` decides what happens where ``X_k = 0``: ``"clamp"`` sets the
    weight to 1, ``"raise"`` raises ``ZeroDivisionError``.
    """
    shape = X.values.shape
    if isinstance(policy, str):
        if policy == "zeros":
            return np.zeros(shape)
        if policy == "ones":
            return np.ones(shape)
        if policy == "return":
            x = X.values
            dx = X.increments()
            zero = x == 0
            if np.any(zero[..., :t, :]) and zero_policy == "raise":
                raise ZeroDivisionError("return-reactive weight with zero wealth")
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.exp(rate - dx / np.where(zero, 1.0, x))
            return np.where(zero, 1.0, w)
        raise ValueError(f"unknown past-weight policy {policy!r}")
    w = np.broadcast_to(np.asarray(policy, dtype=float), shape)
    return w


def stopped_future(X: AdaptedProcess, t: int) -> AdaptedProcess:
    """``X`` on ``[t, T]`` with the earlier rows set to zero."""
    v = X.values.copy()
    v[..., :t, :] = 0.0
    return X.with_values(v)


def path_dependent_index(space: FilteredSpace, X: AdaptedProcess, t: int, future_index: Callable,
                         policy="zeros", zero_policy: str = "clamp") -> np.ndarray:
    """``sum_{k<t} D'_k dX_k`` plus ``future_index`` of the stopped future.

    ``X`` is a cumulative wealth process; ``future_index(space, Y, t)`` is any
    index on processes.  With ``D' = 1`` the past term telescopes to ``X_{t-1}``.
    """
    w = past_weights(space, X, t, policy, zero_policy)
    past = (w[..., :t, :] * X.increments()[..., :t, :]).sum(axis=-2)
    return past + future_index(space, stopped_future(X, t), t)


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class IndexSpec:
    """Named index with its evaluation rule and capability flags."""

    name: str
    evaluate: Callable
    scale_invariant: bool = False
    cash_additive: bool = False
    path_dependent: bool = False
    dual_risk: Callable | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, space: FilteredSpace, X, t: int) -> np.ndarray:
        return self.evaluate(space, X, t)

    def describe(self) -> dict:
        return {"name": self.name, "params": dict(self.params), "scale_invariant": self.scale_invariant,
                "cash_additive": self.cash_additive, "path_dependent": self.path_dependent,
                "has_dual": self.dual_risk is not None}


def get_index(name: str, **params) -> IndexSpec:
    """Look up a shipped index by name.

    Names: ``dglr``, ``entropic``, ``oce`` (``utility`` in exponential,
    shortfall, quadratic), ``weighted_var`` (``distortion`` in minvar, maxvar).
    """
    if name == "dglr":
        return IndexSpec("dglr", dglr, scale_invariant=True,
                         dual_risk=lambda space, t, z, s: dglr_dual_risk(space, t, z, s))
    if name == "entropic":
        g = float(params.get("gamma", 1.0))
        u = exponential_utility(g)
        return IndexSpec("entropic", lambda S, X, t: entropic(S, X, t, g), cash_additive=True,
                         dual_risk=lambda space, t, z, s: oce_dual_risk(space, t, u, z, s),
                         params={"gamma": g})
    if name == "oce":
        kind = params.get("utility", "exponential")
        if kind == "exponential":
            u = exponential_utility(float(params.get("gamma", 1.0)))
        elif kind == "shortfall":
            u = shortfall_utility(float(params.get("beta", 0.1)))
        elif kind == "quadratic":
            u = quadratic_utility()
        else:
            raise UnknownIndex(f"unknown utility {kind!r}")
        return IndexSpec("oce", lambda S, X, t: oce(S, X, t, u), cash_additive=True,
                         dual_risk=lambda space, t, z, s: oce_dual_risk(space, t, u, z, s),
                         params={"utility": kind, **u.params})
    if name == "weighted_var":
        dname = params.get("distortion", "minvar")
        if dname not in DISTORTIONS:
            raise UnknownIndex(f"unknown distortion {dname!r}")
        d = DISTORTIONS[dname]
        return IndexSpec("weighted_var", lambda S, X, t: weighted_var(S, X, t, d), scale_invariant=True,
                         params={"distortion": dname})
    raise UnknownIndex(f"unknown index {name!r}")


INDEX_NAMES = ("dglr", "entropic", "oce", "weighted_var")
