"""Seeded random generators for spaces, positions and monotone functions.

Used by the verification suites and the test-suite; every generator takes a
``numpy.random.Generator`` so runs are reproducible.
"""
from __future__ import annotations

import numpy as np

from .extended import Monotone, MonotoneFn
from .space import AdaptedProcess, FilteredSpace


def random_space(rng: np.random.Generator, n_atoms: int | None = None, T: int | None = None,
                 max_atoms: int = 16, max_T: int = 3, atomic_end: bool = True,
                 trivial_start: bool = True) -> FilteredSpace:
    """Random filtration obtained by successively splitting cells."""
    n = int(rng.integers(2, max_atoms + 1)) if n_atoms is None else n_atoms
    T = int(rng.integers(0, max_T + 1)) if T is None else T
    p = rng.dirichlet(np.full(n, 2.0))
    p = np.maximum(p, 1e-3)
    p /= p.sum()
    p[-1] = 1.0 - p[:-1].sum()
    order = rng.permutation(n)
    if trivial_start:
        parts = [[order.tolist()]]
    else:
        k = int(rng.integers(1, min(n, 3) + 1))
        parts = [[c.tolist() for c in np.array_split(order, k)]]
    for t in range(1, T + 1):
        nxt = []
        for cell in parts[-1]:
            if len(cell) == 1:
                nxt.append(cell)
                continue
            if atomic_end and t == T:
                nxt += [[a] for a in cell]
                continue
            k = int(rng.integers(1, min(len(cell), 3) + 1))
            cuts = np.sort(rng.choice(np.arange(1, len(cell)), size=k - 1, replace=False)) if k > 1 else []
            nxt += [c.tolist() for c in np.split(np.asarray(cell), cuts)]
        parts.append(nxt)
    return FilteredSpace(p, parts)


def random_rv(space: FilteredSpace, rng: np.random.Generator, size=(), scale: float = 2.0,
              lattice: float | None = None) -> np.ndarray:
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    x = rng.normal(0.0, scale, shape + (space.n_atoms,))
    if lattice:
        x = np.round(x / lattice) * lattice
    return x


def random_process(space: FilteredSpace, rng: np.random.Generator, size=(), scale: float = 1.0,
                   lattice: float | None = None) -> AdaptedProcess:
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    vals = np.empty(shape + (space.T + 1, space.n_atoms))
    for s in range(space.T + 1):
        cs = space.cells(s)
        draws = rng.normal(0.0, scale, shape + (len(cs),))
        if lattice:
            draws = np.round(draws / lattice) * lattice
        for k, idx in enumerate(cs):
            vals[..., s, idx] = draws[..., k:k + 1]
    return AdaptedProcess(space, vals)


def fresh_future(space: FilteredSpace, X: AdaptedProcess, t: int, rng: np.random.Generator,
                 scale: float = 1.0) -> AdaptedProcess:
    """Copy of ``X`` with rows ``> t`` redrawn, so both share the prefix ``[0, t]``."""
    Y = random_process(space, rng, X.batch_shape, scale).values.copy()
    Y[..., : t + 1, :] = X.values[..., : t + 1, :]
    return AdaptedProcess(space, Y)


def random_monotone(rng: np.random.Generator, n_vertices: int | None = None,
                    step: float = 0.5) -> Monotone:
    """Random breakpoint function on a dyadic lattice.

    Vertices sit on multiples of ``step`` so that Galois ties on quarter-point
    grids are decided exactly.
    """
    k = int(rng.integers(1, 6)) if n_vertices is None else n_vertices
    x = float(rng.integers(-6, 0)) * step
    y = float(rng.integers(-6, 0)) * step
    verts = [(x, y)]
    for _ in range(k - 1):
        move = rng.integers(0, 3)
        dx = float(rng.integers(1, 4)) * step
        dy = float(rng.integers(1, 4)) * step
        if move == 0:
            x += dx
        elif move == 1:
            y += dy
        else:
            x += dx
            y += dy
        verts.append((x, y))
    tails = ["flat", "vertical", ("slope", 1.0), ("slope", 2.0), ("slope", 0.5)]
    left = tails[int(rng.integers(len(tails)))]
    right = tails[int(rng.integers(len(tails)))]
    side = "upper" if rng.random() < 0.5 else "lower"
    F = Monotone.from_vertices(verts, left, right, side)
    lo, hi = float(F.upper(-np.inf)), float(F.lower(np.inf))
    at_neg = -np.inf if rng.random() < 0.3 else lo
    at_pos = np.inf if rng.random() < 0.3 else hi
    return Monotone(F.pieces, side, at_neg, at_pos)


def random_monotone_fn(rng: np.random.Generator, n_atoms: int) -> MonotoneFn:
    return MonotoneFn([random_monotone(rng) for _ in range(n_atoms)])
