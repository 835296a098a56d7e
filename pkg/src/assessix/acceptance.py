"""Acceptance families of an index and the index recovered from a family.

A family is a finite skeleton: a grid of levels (always containing the two
infinities) and a pool of positions, with a membership table
``member[l, j, i] = [alpha(X_j) >= m_l]`` at atom ``i``.  An oracle evaluates
membership for positions outside the pool (convex combinations, gluings and
so on), which is what the axiom checks need.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._report import CheckReport
from .errors import GridTooCoarse
from .extended import INF, NINF
from .space import AdaptedProcess, FilteredSpace

Index = Callable[[object], np.ndarray]


def level_grid(levels: Sequence[float]) -> np.ndarray:
    """Sorted unique levels with the sentinels ``-inf`` and ``+inf`` added."""
    lv = np.asarray(list(levels), dtype=float)
    lv = lv[~np.isnan(lv)]
    return np.unique(np.concatenate([[NINF, INF], lv]))


def _stack(space: FilteredSpace, pool):
    """Pool of positions as one batched object."""
    if isinstance(pool, AdaptedProcess):
        return pool
    if isinstance(pool, np.ndarray):
        return pool
    if pool and isinstance(pool[0], AdaptedProcess):
        return AdaptedProcess(space, np.stack([p.values for p in pool]), validate=False)
    return np.asarray(pool, dtype=float)


def _combine(X, Y, lam):
    """``lam X + (1 - lam) Y`` with ``lam`` per atom."""
    if isinstance(X, AdaptedProcess):
        v = lam[..., None, :] * X.values + (1 - lam[..., None, :]) * Y.values
        return X.with_values(v)
    return lam * X + (1 - lam) * Y


def _where(mask, X, Y):
    if isinstance(X, AdaptedProcess):
        return X.with_values(np.where(mask, X.values, Y.values))
    return np.where(mask, X, Y)


def _take(X, j):
    if isinstance(X, AdaptedProcess):
        return X[j]
    return X[j]


def _size(X) -> int:
    return X.values.shape[0] if isinstance(X, AdaptedProcess) else X.shape[0]


@dataclass
class AcceptanceFamily:
    """Finite acceptance family ``m -> {X : alpha(X) >= m}`` on a level grid."""

    space: FilteredSpace
    t: int
    levels: np.ndarray
    pool: object
    member: np.ndarray
    oracle: Callable | None = None  # (X, levels, table) -> membership
    name: str = "family"
    meta: dict = field(default_factory=dict)

    def membership(self, X, m=None, slack: float = 0.0) -> np.ndarray:
        """Membership of ``X`` at the given levels (default: the whole grid).

        ``m`` may be a scalar, a per-atom array, or ``None``; the result has
        shape ``(L, ..., n)`` for the grid or ``(..., n)`` for a single level.
        A positive ``slack`` lowers every finite level by ``slack * max(1, |m|)``,
        absorbing rounding in re-evaluated positions.
        """
        if self.oracle is None:
            raise ValueError("family has no oracle for positions outside the pool")
        if m is None:
            return self.oracle(X, _relax(self.levels, slack), True)
        return self.oracle(X, _relax(np.asarray(m, dtype=float), slack), False)


def _relax(m, slack: float):
    if slack == 0.0:
        return m
    with np.errstate(invalid="ignore"):
        low = m - slack * np.maximum(1.0, np.abs(m))
    return np.where(np.isfinite(m), low, m)


def index_to_family(space: FilteredSpace, alpha: Index, t: int, levels, pool, name: str = "index") -> AcceptanceFamily:
    """Family of upper level sets of ``alpha`` on the grid ``levels``.

    ``alpha`` maps a (batched) position to per-atom values at level ``t``.
    """
    grid = level_grid(levels)
    P = _stack(space, pool)
    values = np.asarray(alpha(P), dtype=float)

    def oracle(X, m, table):
        a = values if X is P else np.asarray(alpha(X), dtype=float)
        if table:
            return a[None, ...] >= m.reshape((-1,) + (1,) * a.ndim)
        return a >= m

    member = oracle(P, grid, True)
    return AcceptanceFamily(space, t, grid, P, member, oracle, name, {"values": values})


def family_to_index(family: AcceptanceFamily, X=None, slack: float = 0.0) -> np.ndarray:
    """Highest grid level at which ``X`` is accepted, chosen cell by cell.

    Without ``X`` the membership table of the pool is used.  The ``-inf``
    sentinel is always admissible, so the result is well defined.
    """
    table = family.member if X is None else family.membership(X, slack=slack)
    return _top_level(family, table)


def _top_level(family: AcceptanceFamily, table: np.ndarray) -> np.ndarray:
    grid = family.levels
    space, t = family.space, family.t
    # glue per cell: a level counts on a cell only if accepted on all its atoms
    ok = table.copy()
    for idx in space.cells(t):
        ok[..., idx] = ok[..., idx].all(axis=-1, keepdims=True)
    ok[0] = True
    top = (grid.shape[0] - 1) - np.argmax(ok[::-1], axis=0)
    return grid[top]


def roundtrip_check(family: AcceptanceFamily, values=None) -> CheckReport:
    """Check ``alpha_{A_alpha} = alpha`` and ``A_{alpha_A} = A`` on the pool.

    Exact equality is required where the index value lies on the grid;
    elsewhere the recovered value may sit below by at most one grid step, and
    a larger gap raises :class:`GridTooCoarse`.
    """
    alpha = family.meta["values"] if values is None else np.asarray(values, dtype=float)
    rec = family_to_index(family)
    grid = family.levels
    on_grid = np.isin(alpha, grid)
    exact = rec == alpha
    viol = []
    if np.any(on_grid & ~exact):
        j = np.argwhere(on_grid & ~exact)[0]
        viol.append({"kind": "value", "where": j.tolist(), "alpha": alpha[tuple(j)], "recovered": rec[tuple(j)]})
    max_err = 0.0
    off = ~on_grid
    if np.any(off):
        pos = np.searchsorted(grid, alpha[off], side="right")
        lo = grid[np.clip(pos - 1, 0, grid.size - 1)]
        hi = grid[np.clip(pos, 0, grid.size - 1)]
        step = hi - lo
        gap = alpha[off] - rec[off]
        if np.any(rec[off] > alpha[off]) or np.any(gap > step):
            raise GridTooCoarse("recovered index differs from the index by more than one grid step")
        fin = np.isfinite(gap)
        if np.any(fin):
            max_err = float(np.max(gap[fin]))
    again = rec[None, ...] >= grid.reshape((-1,) + (1,) * rec.ndim)
    if not np.array_equal(again, family.member):
        viol.append({"kind": "membership table differs after round trip"})
    return CheckReport("duality_roundtrip", not viol, int(alpha.size), max_err, viol,
                       {"levels": int(grid.size), "on_grid_fraction": float(on_grid.mean())})


# ---------------------------------------------------------------------------
# axioms


def check_family_axioms(family: AcceptanceFamily, rng: np.random.Generator, n_pairs: int = 100,
                        n_lambda: int = 11, n_monotone: int = 50, tol: float = 1e-9) -> CheckReport:
    """Sample the family axioms on the pool.

    * decreasing in the level;
    * monotone under nonnegative perturbations;
    * convex along ``F_t``-measurable weights from an ``n_lambda`` grid;
    * jointly stable under gluing across cells at glued levels;
    * left-continuous in the level (intersection over levels approaching
      ``m`` from below equals the membership at ``m``).
    """
    space, t, grid = family.space, family.t, family.levels
    P = family.pool
    M = family.member
    N = _size(P)
    n = space.n_atoms
    cells = space.cells(t)
    viol: list[dict] = []
    checked = 0

    dec = M[1:] & ~M[:-1]
    checked += dec.size
    if np.any(dec):
        viol.append({"axiom": "decreasing", "where": np.argwhere(dec)[0].tolist()})

    def cell_lambda(k):
        lam_grid = np.linspace(0.0, 1.0, n_lambda)
        lam = np.empty((k, n))
        picks = rng.integers(0, n_lambda, (k, len(cells)))
        for c, idx in enumerate(cells):
            lam[:, idx] = lam_grid[picks[:, c]][:, None]
        return lam

    # monotone
    j = rng.integers(0, N, n_monotone)
    bump = np.abs(rng.normal(0, 1, (n_monotone,) + _shape_tail(P)))
    bump *= rng.random(bump.shape) < 0.5
    Y = _add(_take(P, j), bump)
    MY = family.membership(Y, slack=tol)
    bad = M[:, j] & ~MY
    checked += bad.size
    if np.any(bad):
        viol.append({"axiom": "monotone", "where": np.argwhere(bad)[0].tolist()})

    # convex
    i1 = rng.integers(0, N, n_pairs)
    i2 = rng.integers(0, N, n_pairs)
    for lam_k in range(2):
        lam = cell_lambda(n_pairs)
        Z = _combine(_take(P, i1), _take(P, i2), lam)
        MZ = family.membership(Z, slack=tol)
        bad = M[:, i1] & M[:, i2] & ~MZ
        checked += bad.size
        if np.any(bad):
            viol.append({"axiom": "convex", "where": np.argwhere(bad)[0].tolist()})
            break

    # joint stability under gluing: X_j at level m_j on cell group j
    n_glue = min(n_pairs, 50)
    groups = rng.integers(0, 2, (n_glue, len(cells)))
    mask = np.zeros((n_glue, n), dtype=bool)
    for c, idx in enumerate(cells):
        mask[:, idx] = groups[:, c:c + 1].astype(bool)
    a1 = rng.integers(0, N, n_glue)
    a2 = rng.integers(0, N, n_glue)
    l1 = rng.integers(0, grid.size, n_glue)
    l2 = rng.integers(0, grid.size, n_glue)
    glued_X = _where(_expand_mask(mask, P), _take(P, a1), _take(P, a2))
    glued_m = np.where(mask, grid[l1][:, None], grid[l2][:, None])
    rhs = np.where(mask, M[l1, a1], M[l2, a2])
    lhs_low = family.membership(glued_X, glued_m, slack=tol)
    lhs_high = family.membership(glued_X, glued_m, slack=-tol)
    bad = (rhs & ~lhs_low) | (~rhs & lhs_high)
    checked += bad.size
    if np.any(bad):
        viol.append({"axiom": "sigma_stable", "where": np.argwhere(bad)[0].tolist()})

    # left continuity; the family is decreasing, so the intersection over
    # levels below m is the membership at the float just below m
    picks = np.arange(1, grid.size)
    if picks.size > 20:
        picks = np.sort(rng.choice(picks, 20, replace=False))
    for li in picks:
        m = grid[li]
        b = np.nextafter(m, NINF) if np.isfinite(m) else np.finfo(float).max
        if grid[li - 1] == b:
            continue  # adjacent floats: no level strictly between, nothing to observe
        inter = family.membership(P, b) & M[li - 1]
        bad = inter != M[li]
        checked += bad.size
        if np.any(bad):
            viol.append({"axiom": "left_continuous", "level": m, "where": np.argwhere(bad)[0].tolist()})
            break
    return CheckReport(f"family_axioms:{family.name}", not viol, checked, 0.0, viol)


def _shape_tail(P):
    if isinstance(P, AdaptedProcess):
        return P.values.shape[1:]
    return P.shape[1:]


def _add(X, d):
    if isinstance(X, AdaptedProcess):
        # keep the bump adapted: constant on cells of each row
        space = X.space
        v = d.copy()
        for s in range(space.T + 1):
            for idx in space.cells(s):
                v[..., s, idx] = v[..., s, idx[:1]]
        return X.with_values(X.values + v)
    return X + d


def _expand_mask(mask, P):
    if isinstance(P, AdaptedProcess):
        return mask[:, None, :]
    return mask


def recovered_index_properties(family: AcceptanceFamily, rng: np.random.Generator,
                               n_pairs: int = 100, n_lambda: int = 11, tol: float = 1e-9) -> CheckReport:
    """Locality, monotonicity and quasiconcavity of the recovered index on the pool."""
    space, t = family.space, family.t
    P = family.pool
    N = _size(P)
    n = space.n_atoms
    cells = space.cells(t)
    alpha = family_to_index(family)
    viol = []
    checked = 0
    i1 = rng.integers(0, N, n_pairs)
    i2 = rng.integers(0, N, n_pairs)
    lam = np.empty((n_pairs, n))
    lg = np.linspace(0, 1, n_lambda)
    for idx in cells:
        lam[:, idx] = lg[rng.integers(0, n_lambda, n_pairs)][:, None]
    Z = _combine(_take(P, i1), _take(P, i2), lam)
    az = family_to_index(family, Z, slack=tol)
    bad = az < np.minimum(alpha[i1], alpha[i2])
    checked += bad.size
    if np.any(bad):
        viol.append({"property": "quasiconcave", "where": np.argwhere(bad)[0].tolist()})
    # locality through gluing: the glued position's index agrees cellwise
    groups = rng.integers(0, 2, (n_pairs, len(cells))).astype(bool)
    mask = np.zeros((n_pairs, n), dtype=bool)
    for c, idx in enumerate(cells):
        mask[:, idx] = groups[:, c:c + 1]
    G = _where(_expand_mask(mask, P), _take(P, i1), _take(P, i2))
    want = np.where(mask, alpha[i1], alpha[i2])
    bad = (family_to_index(family, G, slack=tol) < want) | (family_to_index(family, G, slack=-tol) > want)
    checked += bad.size
    if np.any(bad):
        viol.append({"property": "local", "where": np.argwhere(bad)[0].tolist()})
    # monotone along comparable pairs
    j = rng.integers(0, N, n_pairs)
    bump = np.abs(rng.normal(0, 1, (n_pairs,) + _shape_tail(P)))
    Y = _add(_take(P, j), bump)
    ay = family_to_index(family, Y, slack=tol)
    bad = ay < alpha[j]
    checked += bad.size
    if np.any(bad):
        viol.append({"property": "monotone", "where": np.argwhere(bad)[0].tolist()})
    return CheckReport(f"recovered_index:{family.name}", not viol, checked, 0.0, viol)
