"""Penalty and risk functions, and robust evaluation over dual grids.

Dual functionals for the cone of nonnegative positions are nonnegative
densities ``z`` acting through ``<z, X> = E[z X | F_t]``.  Grids of normalized
densities (``E[z | F_t] = 1``) are generated cell by cell: lattice points of
the probability simplex on each cell, and Dirichlet samples.  Because risk
functions are local in the density, a cellwise minimum over per-cell lists
equals the minimum over all combinations of them.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Sequence

import numpy as np

from ._report import CheckReport
from .errors import EmptyDualGrid, NonMonotoneRefinement
from .extended import INF, NINF, Monotone, MonotoneFn, inverse
from .space import FilteredSpace, cond_expectation


@dataclass(frozen=True, eq=False)
class DualGrid:
    """Stack of normalized densities ``z`` (``K x n``) at level ``t``."""

    space: FilteredSpace
    t: int
    z: np.ndarray
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.z, dtype=float))
        if z.shape[0] == 0:
            raise EmptyDualGrid("empty dual grid")
        if z.shape[-1] != self.space.n_atoms or np.any(z < 0):
            raise ValueError("densities must be nonnegative with one entry per atom")
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return self.z.shape[0]

    def normalized(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(cond_expectation(self.space, self.z, self.t) - 1.0) <= tol))

    def merge(self, other: "DualGrid") -> "DualGrid":
        return DualGrid(self.space, self.t, np.vstack([self.z, other.z]), {"merged": [self.config, other.config]})

    def to_dict(self) -> dict:
        return {"t": self.t, "config": self.config, "size": len(self), "z": self.z.tolist()}


def simplex_lattice(k: int, N: int) -> np.ndarray:
    """All compositions of ``N`` into ``k`` nonnegative parts, divided by ``N``.

    >>> simplex_lattice(2, 2).tolist()
    [[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]]
    """
    if k == 1:
        return np.ones((1, 1))
    rows = []
    for bars in itertools.combinations(range(N + k - 1), k - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(N + k - 2 - prev)
        rows.append(parts)
    return np.asarray(rows, dtype=float) / N


def lattice_size(k: int, N: int) -> int:
    return comb(N + k - 1, k - 1)


def _steps(h: float) -> int:
    N = int(round(1.0 / h))
    if N < 1 or abs(N * h - 1.0) > 1e-9:
        raise ValueError(f"lattice step {h} must be 1/N for an integer N")
    return N


def _assemble(space: FilteredSpace, t: int, per_cell: list[np.ndarray]) -> np.ndarray:
    """Stack per-cell conditional laws into densities, cycling shorter lists."""
    K = max(q.shape[0] for q in per_cell)
    z = np.empty((K, space.n_atoms))
    for idx, q in zip(space.cells(t), per_cell):
        rows = q[np.arange(K) % q.shape[0]]
        pc = space.probs[idx].sum()
        z[:, idx] = rows * pc / space.probs[idx][None, :]
    return z


def lattice_grid(space: FilteredSpace, t: int, h: float, max_points: int = 500_000) -> DualGrid:
    """Densities whose conditional laws lie on the ``h``-lattice of each cell's simplex."""
    N = _steps(h)
    sizes = [lattice_size(len(idx), N) for idx in space.cells(t)]
    if max(sizes) > max_points:
        raise ValueError(f"lattice with {max(sizes)} points per cell exceeds max_points")
    per_cell = [simplex_lattice(len(idx), N) for idx in space.cells(t)]
    return DualGrid(space, t, _assemble(space, t, per_cell), {"kind": "lattice", "h": h})


def dirichlet_grid(space: FilteredSpace, t: int, samples: int, seed: int = 0,
                   concentrations: Sequence[float] = (0.2, 1.0, 5.0)) -> DualGrid:
    """Random conditional laws, stratified over Dirichlet concentrations."""
    rng = np.random.default_rng(seed)
    per_cell = []
    for idx in space.cells(t):
        k = len(idx)
        rows = [rng.dirichlet(np.full(k, concentrations[i % len(concentrations)])) if k > 1 else np.ones(1)
                for i in range(samples)]
        per_cell.append(np.asarray(rows))
    return DualGrid(space, t, _assemble(space, t, per_cell),
                    {"kind": "dirichlet", "samples": samples, "seed": seed, "concentrations": list(concentrations)})


def pair(space: FilteredSpace, t: int, z, X) -> np.ndarray:
    """``<z, X> = E[z X | F_t]`` for stacked densities ``z`` (``K x n``)."""
    z = np.asarray(z, dtype=float)
    X = np.asarray(X, dtype=float)
    return cond_expectation(space, z * X, t)


RiskFn = Callable[[FilteredSpace, int, np.ndarray, np.ndarray], np.ndarray]


def robust_evaluate(R: RiskFn, grid: DualGrid, X, return_argmin: bool = False):
    """Cellwise ``min_z R(z, <z, X>)`` over the grid.

    An upper bound on the infimum over all densities; enlarging the grid can
    only lower it.
    """
    space, t = grid.space, grid.t
    x = np.asarray(X, dtype=float)
    s = pair(space, t, grid.z[(slice(None),) + (None,) * (x.ndim - 1)], x[None, ...])
    zz = np.broadcast_to(grid.z[(slice(None),) + (None,) * (x.ndim - 1)], s.shape)
    vals = np.asarray(R(space, t, zz, s), dtype=float)
    k = np.argmin(vals, axis=0)
    out = np.take_along_axis(vals, k[None, ...], axis=0)[0]
    return (out, k) if return_argmin else out


def characteristic(member) -> np.ndarray:
    """Conditional characteristic function: ``0`` where accepted, ``-inf`` elsewhere."""
    return np.where(np.asarray(member, dtype=bool), 0.0, NINF)


def penalty_from_set(space: FilteredSpace, t: int, member: Callable, candidates, z) -> np.ndarray:
    """Cellwise ``min <z, X>`` over the candidate positions accepted by ``member``.

    ``member(X)`` returns per-atom acceptance for a stack of candidates; a
    candidate counts on a cell only if accepted on every atom of it.  Cells
    where no candidate is accepted get ``+inf``.  Over a finite search grid
    this is an upper bound on the true infimum.
    """
    C = np.atleast_2d(np.asarray(candidates, dtype=float))
    z = np.asarray(z, dtype=float)
    ok = np.asarray(member(C), dtype=bool)
    for idx in space.cells(t):
        ok[..., idx] = ok[..., idx].all(axis=-1, keepdims=True)
    zb = z[..., None, :] if z.ndim > 1 else z[None, :]
    vals = cond_expectation(space, zb * C, t)
    vals = np.where(ok, vals, INF)
    return vals.min(axis=-2)


def risk_from_penalty(penalty: MonotoneFn, s=None):
    """Right inverse in the level argument: ``R(z, .) = pi(z, .)^(-1, r)``.

    ``penalty`` is the map ``m -> pi(z, m)`` for a fixed ``z``, one increasing
    function per atom.  Returns the risk curve, or its values at ``s``.
    """
    R = inverse(penalty, "right")
    return R if s is None else R(s)


def penalty_from_risk(risk: MonotoneFn, m=None):
    """Right inverse of ``s -> R(z, s)``; undoes :func:`risk_from_penalty`."""
    P = inverse(risk, "right")
    return P if m is None else P(m)


def scale_invariant_risk(polar_member: Callable, z, s, m_grid) -> np.ndarray:
    """Risk function of a scale-invariant index from its polar family.

    ``-inf`` where ``s = -inf``, ``+inf`` where ``s >= 0``, and otherwise the
    smallest grid level ``m`` with ``z`` in the level-``m`` polar cone
    (``+inf`` if there is none).  ``polar_member(m, z)`` returns per-atom
    membership.
    """
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    grid = np.sort(np.asarray(m_grid, dtype=float))
    best = np.full(np.broadcast_shapes(z.shape, s.shape), INF)
    for m in grid[::-1]:
        ok = np.asarray(polar_member(m, z), dtype=bool)
        best = np.where(ok, m, best)
    out = np.where(s >= 0, INF, best)
    return np.where(s == NINF, NINF, out)


def _gap(robust: np.ndarray, direct: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        d = robust - direct
    return np.where(robust == direct, 0.0, d)


def refinement_audit(space: FilteredSpace, t: int, R: RiskFn, X, direct, schedule=(0.05, 0.02, 0.01),
                     samples: int = 0, seed: int = 0, tol: float = 1e-9) -> CheckReport:
    """Robust value against a direct value along a schedule of lattice steps.

    Grids are accumulated (each level keeps the points of the coarser ones),
    so the robust value can only decrease.  ``samples`` Dirichlet points are
    added to the first grid.  The report lists, per step, the largest and
    smallest atomwise gap ``robust - direct`` and the grid size.

    Raises
    ------
    NonMonotoneRefinement
        If the largest gap grows from one step to the next.
    """
    direct = np.asarray(direct, dtype=float)
    grid = None
    rows = []
    viol = []
    prev = INF
    for k, h in enumerate(schedule):
        g = lattice_grid(space, t, h)
        if k == 0 and samples:
            g = g.merge(dirichlet_grid(space, t, samples, seed))
        grid = g if grid is None else grid.merge(g)
        gap = _gap(robust_evaluate(R, grid, X), direct)
        hi, lo = float(np.max(gap)), float(np.min(gap))
        rows.append({"h": h, "grid_size": len(grid), "gap": hi, "min_gap": lo})
        if lo < -tol:
            viol.append({"kind": "robust value below direct value", "h": h, "min_gap": lo})
        if hi > prev + tol:
            raise NonMonotoneRefinement(f"gap grew from {prev} to {hi} at h={h}")
        prev = hi
    return CheckReport("dual_refinement", not viol, len(rows), prev, viol,
                       {"schedule": list(schedule), "levels": rows, "samples": samples, "seed": seed})
