"""Certainty equivalents, strong time consistency and backward recursion.

A dynamic family assigns an index ``alpha_t`` to every time ``t``.  Its
certainty equivalent ``C_t(X)`` is the cash level ``m`` with
``alpha_t(m kappa) = alpha_t(X)`` in the direction ``kappa = 1_[t, T]``
(past rows of ``X`` kept).  Strongly consistent families satisfy

    C_t(X) = C_t(X_[0, t] + C_{t+1}(X) 1_[t+1, T]),

and can be computed backwards from ``C_T(X) = X_T`` by one-step dual
problems.  On a finite space every random variable is bounded, so no
integrability condition on the levels is needed.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._report import CheckReport
from .duality import _steps, simplex_lattice
from .errors import BracketFailure, EmptyDualGrid, NotIncreasing
from .indices import dglr, entropic
from .space import AdaptedProcess, FilteredSpace, cond_expectation, cond_extremum

Index = Callable[[FilteredSpace, object, int], np.ndarray]


# ---------------------------------------------------------------------------
# certainty equivalents


def _direction(space: FilteredSpace, X, t: int, kappa):
    """Return ``m -> position`` for the ray ``past(X) + m kappa``."""
    if isinstance(X, AdaptedProcess):
        base = np.array(X.values, dtype=float)
        base[..., t:, :] = 0.0
        if kappa is None:
            k = np.zeros(base.shape[-2:])
            k[t:, :] = 1.0
        else:
            k = np.asarray(kappa, dtype=float)

        def ray(m):
            v = base + np.asarray(m, dtype=float)[..., None, :] * k
            return AdaptedProcess(space, v, validate=False)
        return ray
    k = np.ones(space.n_atoms) if kappa is None else np.asarray(kappa, dtype=float)
    return lambda m: np.asarray(m, dtype=float) * k


def _default_bracket(space: FilteredSpace, X, t: int):
    vals = X.values[..., t:, :] if isinstance(X, AdaptedProcess) else np.asarray(X, dtype=float)[..., None, :]
    lo = cond_extremum(space, vals.min(axis=-2), t, "inf") - 1.0
    hi = cond_extremum(space, vals.max(axis=-2), t, "sup") + 1.0
    return lo, hi


def certainty_equivalent(space: FilteredSpace, index: Index, X, t: int, kappa=None, bracket=None,
                         tol: float = 1e-12, max_iter: int = 200, n_probe: int = 9) -> np.ndarray:
    """Smallest ``m`` (per ``F_t`` cell) with ``alpha(m kappa) >= alpha(X)``.

    Bisection on the increasing map ``m -> alpha(m kappa)``.  The bracket
    defaults to the cell range of ``X`` on ``[t, T]`` widened by one.

    Raises
    ------
    BracketFailure
        If ``alpha(lo kappa) < alpha(X) <= alpha(hi kappa)`` fails on a cell.
    NotIncreasing
        If ``m -> alpha(m kappa)`` decreases on the bracket.

    Examples
    --------
    >>> S = FilteredSpace([0.5, 0.5], [[[0, 1]]])
    >>> from assessix.indices import entropic
    >>> c = certainty_equivalent(S, entropic, np.array([1.0, 1.0]), 0)
    >>> bool(abs(c[0] - 1.0) < 1e-9)
    True
    """
    ray = _direction(space, X, t, kappa)
    target = np.asarray(index(space, X, t), dtype=float)
    if bracket is None:
        lo, hi = _default_bracket(space, X, t)
    else:
        lo = np.broadcast_to(np.asarray(bracket[0], dtype=float), target.shape).copy()
        hi = np.broadcast_to(np.asarray(bracket[1], dtype=float), target.shape).copy()
    lo = np.broadcast_to(lo, target.shape).astype(float)
    hi = np.broadcast_to(hi, target.shape).astype(float)

    probes = np.stack([np.asarray(index(space, ray(lo + (hi - lo) * w), t), dtype=float)
                       for w in np.linspace(0.0, 1.0, n_probe)], axis=0)
    scale = np.maximum(1.0, np.where(np.isfinite(probes), np.abs(probes), 0.0))
    with np.errstate(invalid="ignore"):
        drops = np.diff(probes, axis=0) < -1e-12 * scale[1:]
    if np.any(drops):
        raise NotIncreasing("m -> alpha(m kappa) decreases on the bracket")
    if np.any(~(probes[0] < target)) or np.any(~(target <= probes[-1])):
        bad = np.flatnonzero(~((probes[0] < target) & (target <= probes[-1])).reshape(-1))
        raise BracketFailure(f"kappa-boundedness fails at flat index {int(bad[0])}")

    for _ in range(max_iter):
        if np.max(hi - lo) <= tol:
            break
        mid = 0.5 * (lo + hi)
        up = np.asarray(index(space, ray(mid), t), dtype=float) >= target
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    return hi


# ---------------------------------------------------------------------------
# dynamic families


@dataclass(frozen=True)
class DynamicIndexFamily:
    """Per-time indices ``alpha_t``; ``members[t](space, X, t)``."""

    name: str
    members: Sequence[Index]
    path_dependent: bool = False
    params: dict = field(default_factory=dict)

    def __call__(self, space: FilteredSpace, X, t: int) -> np.ndarray:
        return self.members[t](space, X, t)

    def index(self, t: int) -> Index:
        return self.members[t]


def entropic_family(T: int, gamma: float = 1.0) -> DynamicIndexFamily:
    """Entropic index with the same risk aversion at every time."""
    member = lambda S, X, t: entropic(S, X, t, gamma)
    return DynamicIndexFamily("entropic", [member] * (T + 1), params={"gamma": gamma})


def mixed_entropic_family(T: int, gammas: tuple[float, float] = (1.0, 2.0)) -> DynamicIndexFamily:
    """Entropic indices alternating risk aversion between even and odd times.

    Not strongly consistent: the one-step aggregation changes with ``t``.
    """
    members = [(lambda S, X, t, g=gammas[t % 2]: entropic(S, X, t, g)) for t in range(T + 1)]
    return DynamicIndexFamily("mixed_entropic", members, params={"gammas": list(gammas)})


def dglr_family(T: int) -> DynamicIndexFamily:
    """Gain-to-loss ratio of the cumulative future cash flow at every time."""
    return DynamicIndexFamily("dglr", [dglr] * (T + 1))


FAMILIES = {"entropic": entropic_family, "dglr": dglr_family, "mixed_entropic": mixed_entropic_family}


# ---------------------------------------------------------------------------
# consistency checks


def strong_consistency_check(space: FilteredSpace, family: DynamicIndexFamily, pairs, t_range=None,
                             tol: float = 1e-9, max_witnesses: int = 5) -> CheckReport:
    """Check ``alpha_{t+1}(X) >= alpha_{t+1}(Y)  =>  alpha_t(X) >= alpha_t(Y)``.

    For each pair and ``t`` the premise is read on ``F_{t+1}`` cells; the
    conclusion is checked on every ``F_t`` cell where ``X`` and ``Y`` share
    the path up to ``t`` and the premise holds on all of its children.
    """
    T = space.T
    ts = range(T) if t_range is None else t_range
    viol: list[dict] = []
    checked = 0
    n_violations = 0
    worst = 0.0
    for p, (X, Y) in enumerate(pairs):
        for t in ts:
            if t >= T:
                continue
            same = np.all(X.values[: t + 1] == Y.values[: t + 1], axis=0)
            a1x, a1y = family(space, X, t + 1), family(space, Y, t + 1)
            with np.errstate(invalid="ignore"):
                premise = (a1x >= a1y - tol) & same
            ok_cell = cond_extremum(space, (~premise).astype(float), t, "sup") == 0
            if not np.any(ok_cell):
                continue
            a0x, a0y = family(space, X, t), family(space, Y, t)
            with np.errstate(invalid="ignore"):
                bad = ok_cell & ~(a0x >= a0y - tol)
            checked += len(np.unique(space.labels(t)[ok_cell]))
            if np.any(bad):
                n_violations += 1
                atom = int(np.flatnonzero(bad)[0])
                gap = float(a0y[atom] - a0x[atom])
                worst = max(worst, gap if np.isfinite(gap) else np.inf)
                if len(viol) < max_witnesses:
                    viol.append({"pair": p, "t": t, "cell": int(space.labels(t)[atom]),
                                 "X": X.values, "Y": Y.values,
                                 "alpha_next": [a1x, a1y], "alpha_now": [a0x, a0y],
                                 "probs": space.probs, "partitions": [[c.tolist() for c in space.cells(s)]
                                                                      for s in range(T + 1)]})
    return CheckReport("strong_consistency", n_violations == 0, checked, worst, viol,
                       {"family": family.name, "pairs": len(pairs), "violations": n_violations})


def frozen_continuation(space: FilteredSpace, X: AdaptedProcess, t: int, c_next) -> AdaptedProcess:
    """``X`` on ``[0, t]`` followed by the constant ``c_next`` on ``[t+1, T]``."""
    v = np.array(X.values, dtype=float)
    v[..., t + 1:, :] = np.asarray(c_next, dtype=float)[..., None, :]
    return AdaptedProcess(space, v, validate=False)


def bellman_check(space: FilteredSpace, family: DynamicIndexFamily, pool, t_range=None,
                  tol: float = 1e-6, ce_kwargs: dict | None = None) -> CheckReport:
    """Compare ``C_t(X)`` with ``C_t(X_[0,t] + C_{t+1}(X) 1_[t+1,T])``."""
    kw = {} if ce_kwargs is None else dict(ce_kwargs)
    T = space.T
    ts = range(T) if t_range is None else t_range
    err = 0.0
    checked = 0
    viol = []
    for p, X in enumerate(pool):
        for t in ts:
            if t >= T:
                continue
            lhs = certainty_equivalent(space, family.index(t), X, t, **kw)
            c1 = certainty_equivalent(space, family.index(t + 1), X, t + 1, **kw)
            rhs = certainty_equivalent(space, family.index(t), frozen_continuation(space, X, t, c1), t, **kw)
            d = float(np.max(np.abs(lhs - rhs)))
            err = max(err, d)
            checked += 1
            if d > tol and len(viol) < 5:
                viol.append({"index": p, "t": t, "lhs": lhs, "rhs": rhs, "X": X.values})
    return CheckReport("bellman", err <= tol, checked, err, viol, {"family": family.name})


# ---------------------------------------------------------------------------
# backward recursion


@dataclass(frozen=True)
class OneStepRisk:
    """One-step dual risk ``R_{t,t+1}(z, D, s)``.

    ``risk(space, t, z, D, s)`` evaluates on stacked candidates (``K x n``);
    ``candidates(space, t, x_t, c_next)`` may add exact minimizers to the
    lattice.
    """

    name: str
    risk: Callable
    candidates: Callable | None = None
    params: dict = field(default_factory=dict)


def linear_one_step() -> OneStepRisk:
    """``R(z, D, s) = s``."""
    return OneStepRisk("linear", lambda space, t, z, D, s: s)


def _stop_weights(space: FilteredSpace, t: int, mu):
    T = space.T
    w = np.full((T + 1, space.n_atoms), 1.0 / (T + 1)) if mu is None else np.asarray(mu, dtype=float)
    w0 = w[t] / cond_expectation(space, w[t:].sum(axis=0), t)
    return w0, 1.0 - w0


def entropic_one_step(gamma: float = 1.0, mu=None) -> OneStepRisk:
    """Relative entropy of the one-step pair ``(1 - D, D z)`` against ``(w0, w1 P)``.

    ``w0 = mu_t / E[sum_{s>=t} mu_s | F_t]`` is the weight of stopping at ``t``.
    The exact Gibbs minimizer is supplied as an extra candidate.
    """
    from scipy.special import xlogy

    def risk(space, t, z, D, s):
        w0, w1 = _stop_weights(space, t, mu)
        ent = cond_expectation(space, xlogy(z, z), t)
        pen = xlogy(1.0 - D, 1.0 - D) - (1.0 - D) * np.log(w0) + xlogy(D, D) - D * np.log(w1) + D * ent
        return s + pen / gamma

    def candidates(space, t, x_t, c_next):
        w0, w1 = _stop_weights(space, t, mu)
        shift = np.minimum(cond_extremum(space, c_next, t, "inf"), x_t)
        e_next = np.exp(-gamma * (c_next - shift))
        m = cond_expectation(space, e_next, t)
        z = e_next / m
        cont = w1 * m
        D = cont / (w0 * np.exp(-gamma * (x_t - shift)) + cont)
        return z[None, :], D[None, :]

    return OneStepRisk("entropic", risk, candidates, {"gamma": gamma})


def one_step_grid(space: FilteredSpace, t: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Lattice of one-step pairs at ``t``: densities on ``F_{t+1}`` and ``F_t``-measurable ``D``.

    Densities have ``E[z | F_t] = 1`` with conditional laws over the child
    cells on the ``h``-lattice; ``D`` runs over ``{0, h, ..., 1}``.  Per-cell
    lists are cycled to a common length (the risk is local, so the cellwise
    minimum is unchanged).
    """
    N = _steps(h)
    d_vals = np.arange(N + 1) / N
    per_cell = []
    for idx in space.cells(t):
        kids = np.unique(space.labels(t + 1)[idx])
        lat = simplex_lattice(len(kids), N)
        per_cell.append((idx, kids, [(q, d) for q, d in itertools.product(range(lat.shape[0]), d_vals)], lat))
    K = max(len(c[2]) for c in per_cell)
    z = np.empty((K, space.n_atoms))
    D = np.empty((K, space.n_atoms))
    lab = space.labels(t + 1)
    for idx, kids, combos, lat in per_cell:
        pc = space.probs[idx].sum()
        for k in range(K):
            q, d = combos[k % len(combos)]
            for j, kid in enumerate(kids):
                atoms = idx[lab[idx] == kid]
                z[k, atoms] = lat[q, j] * pc / space.probs[atoms].sum()
            D[k, idx] = d
    return z, D


def backward_recursion(space: FilteredSpace, one_step: OneStepRisk, X: AdaptedProcess, h: float = 0.1,
                       grid: Callable | None = None, t_min: int = 0) -> list[np.ndarray]:
    """``C_T = X_T`` and ``C_t = min R(z, D, X_t + E[z D (C_{t+1} - X_t) | F_t])``.

    ``grid(space, t)`` returns stacked ``(z, D)``; the default is
    :func:`one_step_grid` with step ``h``.  Returns ``[C_t_min, ..., C_T]``.

    Raises
    ------
    EmptyDualGrid
        If a one-step grid has no candidates.
    """
    T = space.T
    x = X.values
    if x.ndim != 2:
        raise ValueError("backward_recursion expects a single process")
    make = (lambda S, t: one_step_grid(S, t, h)) if grid is None else grid
    C = [None] * (T + 1)
    C[T] = np.array(x[T], dtype=float)
    for t in range(T - 1, t_min - 1, -1):
        z, D = make(space, t)
        z = np.atleast_2d(np.asarray(z, dtype=float))
        D = np.atleast_2d(np.asarray(D, dtype=float))
        if one_step.candidates is not None:
            zc, Dc = one_step.candidates(space, t, x[t], C[t + 1])
            z, D = np.vstack([z, zc]), np.vstack([D, Dc])
        if z.shape[0] == 0:
            raise EmptyDualGrid(f"no one-step dual pairs at t={t}")
        s = x[t] + D * cond_expectation(space, z * (C[t + 1] - x[t]), t)
        vals = np.asarray(one_step.risk(space, t, z, D, s), dtype=float)
        C[t] = vals.min(axis=0)
    return C[t_min:]
