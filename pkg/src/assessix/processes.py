"""Random measures, predictable discounts and dual pairs for processes.

A random measure ``gamma`` on ``[t, T]`` and a predictable decreasing
discount ``D`` with ``D_0 = ... = D_t = 1`` describe the same object through
``D_s = 1 - sum_{k<s} gamma_k`` and ``gamma_s = D_s - D_{s+1}`` (with
``D_{T+1} = 0``).  Paired with a martingale density ``z`` they act on
adapted processes by ``E[z sum_s gamma_s X_s | F_t]``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ._report import CheckReport
from .errors import IdentityViolation, InvariantViolation, NotAdapted, NotPredictable
from .extended import ext_close
from .space import AdaptedProcess, FilteredSpace, cond_expectation

TOL = 1e-12


def _adapted(space: FilteredSpace, v: np.ndarray, shift: int = 0) -> bool:
    """Row ``s`` constant on cells of level ``s - shift`` (trivial below 0)."""
    for s in range(space.T + 1):
        lv = s - shift
        cells = space.cells(lv) if lv >= 0 else (np.arange(space.n_atoms),)
        for idx in cells:
            if np.any(v[..., s, idx] != v[..., s, idx[:1]]):
                return False
    return True


@dataclass(frozen=True, eq=False)
class TimeMeasure:
    """Adapted positive weights ``mu_s`` summing to one over time, atomwise."""

    space: FilteredSpace
    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (self.space.T + 1, self.space.n_atoms):
            raise ValueError("mu needs shape (T+1, n_atoms)")
        if np.any(mu <= 0) or np.any(np.abs(mu.sum(axis=0) - 1.0) > TOL):
            raise ValueError("mu must be positive and sum to one over time")
        if not _adapted(self.space, mu):
            raise NotAdapted("mu is not adapted")
        object.__setattr__(self, "mu", mu)

    @classmethod
    def uniform(cls, space: FilteredSpace) -> "TimeMeasure":
        return cls(space, np.full((space.T + 1, space.n_atoms), 1.0 / (space.T + 1)))


@dataclass(frozen=True, eq=False)
class RandomMeasure:
    """Adapted nonnegative ``gamma`` vanishing before ``t`` with unit mass on ``[t, T]``."""

    space: FilteredSpace
    t: int
    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        S = self.space
        if g.shape[-2:] != (S.T + 1, S.n_atoms):
            raise InvariantViolation("gamma needs shape (..., T+1, n_atoms)")
        if np.any(g < 0):
            raise InvariantViolation("gamma must be nonnegative")
        if np.any(g[..., : self.t, :] != 0):
            raise InvariantViolation("gamma must vanish before t")
        if np.any(np.abs(g.sum(axis=-2) - 1.0) > TOL):
            raise InvariantViolation("gamma must have unit mass on [t, T]")
        if not _adapted(S, g):
            raise NotAdapted("gamma is not adapted")
        object.__setattr__(self, "gamma", g)


@dataclass(frozen=True, eq=False)
class Discounting:
    """Predictable decreasing ``D`` in ``[0, 1]`` with ``D_0 = ... = D_t = 1``."""

    space: FilteredSpace
    t: int
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        S = self.space
        if d.shape[-2:] != (S.T + 1, S.n_atoms):
            raise InvariantViolation("D needs shape (..., T+1, n_atoms)")
        if np.any(d[..., : self.t + 1, :] != 1.0):
            raise InvariantViolation("D must equal one up to t")
        if np.any(d < 0) or np.any(np.diff(d, axis=-2) > 0):
            raise InvariantViolation("D must be nonnegative and decreasing")
        if not _adapted(S, d, shift=1):
            raise NotPredictable("D_s must be measurable at level s - 1")
        object.__setattr__(self, "d", d)


@dataclass(frozen=True, eq=False)
class MartingaleDensity:
    """Terminal density ``z`` with ``E[z | F_t] = 1``; ``M_s = E[z | F_s]``."""

    space: FilteredSpace
    t: int
    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.shape[-1] != self.space.n_atoms or np.any(z < 0):
            raise InvariantViolation("density must be nonnegative with one entry per atom")
        if np.any(np.abs(cond_expectation(self.space, z, self.t) - 1.0) > 1e-12):
            raise InvariantViolation("density must satisfy E[z | F_t] = 1")
        object.__setattr__(self, "z", z)

    def martingale(self) -> np.ndarray:
        """``M_s = E[z | F_s]`` for ``s = 0..T``, shape ``(..., T+1, n)``."""
        return np.stack([cond_expectation(self.space, self.z, s) for s in range(self.space.T + 1)], axis=-2)


def gamma_to_D(g: RandomMeasure) -> Discounting:
    """``D_s = 1 - sum_{k<s} gamma_k``."""
    gam = g.gamma
    csum = np.cumsum(gam, axis=-2)
    d = np.ones_like(gam)
    d[..., 1:, :] = 1.0 - csum[..., :-1, :]
    d[..., : g.t + 1, :] = 1.0
    d = np.clip(d, 0.0, 1.0)
    return Discounting(g.space, g.t, d)


def D_to_gamma(D: Discounting) -> RandomMeasure:
    """``gamma_s = D_s - D_{s+1}`` with ``D_{T+1} = 0``."""
    d = D.d
    nxt = np.concatenate([d[..., 1:, :], np.zeros_like(d[..., :1, :])], axis=-2)
    return RandomMeasure(D.space, D.t, d - nxt)


def pairing(obj, X: AdaptedProcess, t: int | None = None) -> np.ndarray:
    """``sum_{s>=t} gamma_s X_s``, cross-checked against ``X_t + sum_{s>t} D_s dX_s``.

    ``obj`` is a :class:`RandomMeasure` or a :class:`Discounting`.  The result
    is a per-atom random variable.

    Raises
    ------
    IdentityViolation
        If the two forms disagree by more than 1e-12 (relative to the scale of X).
    """
    if isinstance(obj, RandomMeasure):
        g, D = obj, gamma_to_D(obj)
    else:
        g, D = D_to_gamma(obj), obj
    t = g.t if t is None else t
    x = X.values
    gform = (g.gamma[..., t:, :] * x[..., t:, :]).sum(axis=-2)
    dform = x[..., t, :] + (D.d[..., t + 1:, :] * np.diff(x[..., t:, :], axis=-2)).sum(axis=-2)
    scale = max(1.0, float(np.max(np.abs(x))))
    if np.any(np.abs(gform - dform) > TOL * scale * (X.T + 1)):
        raise IdentityViolation(f"pairing forms differ by {np.max(np.abs(gform - dform))}")
    return gform


def process_dual_expectation(Q: MartingaleDensity, D: Discounting, X: AdaptedProcess, t: int) -> np.ndarray:
    """``X_t + E[z sum_{k>t} D_k dX_k | F_t]``, asserted equal to the measure form."""
    S = Q.space
    x = X.values
    inc = (D.d[..., t + 1:, :] * np.diff(x[..., t:, :], axis=-2)).sum(axis=-2)
    dform = x[..., t, :] + cond_expectation(S, Q.z * inc, t)
    g = D_to_gamma(D).gamma
    gsum = (g[..., t:, :] * x[..., t:, :]).sum(axis=-2)
    gform = cond_expectation(S, Q.z * gsum, t)
    scale = max(1.0, float(np.max(np.abs(x))))
    if np.any(np.abs(gform - dform) > 1e-12 * scale * (S.T + 1)):
        raise IdentityViolation("measure form and discount form disagree")
    return dform


# ---------------------------------------------------------------------------
# dual grids on processes


def _d_paths(space: FilteredSpace, t: int, N: int) -> Iterator[np.ndarray]:
    """Every predictable decreasing ``D`` with values in ``{0, 1/N, ..., 1}``."""
    T, n = space.T, space.n_atoms
    # free coordinates: one per (s, cell of level s-1) for s = t+1..T
    slots = [(s, c) for s in range(t + 1, T + 1) for c in range(len(space.cells(s - 1)))]
    parent = {}
    for s, c in slots:
        idx = space.cells(s - 1)[c]
        if s - 1 > t:
            parent[(s, c)] = (s - 1, int(space.labels(s - 2)[idx[0]]))
        else:
            parent[(s, c)] = None
    values = {}

    def rec(i):
        if i == len(slots):
            d = np.ones((T + 1, n))
            for (s, c), v in values.items():
                d[s, space.cells(s - 1)[c]] = v / N
            yield d
            return
        s, c = slots[i]
        par = parent[(s, c)]
        cap = N if par is None else values[par]
        for v in range(cap, -1, -1):
            values[(s, c)] = v
            yield from rec(i + 1)
        del values[(s, c)]

    yield from rec(0)


def count_d_paths(space: FilteredSpace, t: int, N: int) -> int:
    """Number of lattice discount paths, by dynamic programming over the tree.

    ``ways(s, cell, v)`` counts assignments below a node whose discount is
    ``v``; children choose any value ``<= v`` independently.
    """
    T = space.T
    if t >= T:
        return 1

    def ways(s: int, cell_atoms: np.ndarray, cap: int) -> int:
        # node at time s (discount measurable at s-1, chosen cell at level s-1)
        if s > T:
            return 1
        total = 0
        for v in range(cap + 1):
            prod = 1
            if s + 1 <= T:
                sub = np.unique(space.labels(s)[cell_atoms])
                for k in sub:
                    prod *= ways(s + 1, space.cells(s)[k], v)
            total += prod
        return total

    out = 1
    for idx in space.cells(t):
        out *= ways(t + 1, idx, N)
    return out


def dual_grid_processes(space: FilteredSpace, t: int, h: float = 1.0, max_pairs: int = 200_000):
    """Lattice dual pairs ``(MartingaleDensity, Discounting)`` for level ``t``.

    Densities: conditional laws given ``F_t`` on the ``h``-lattice of each
    cell's simplex (combined across cells).  Discounts: predictable
    decreasing paths with values on the ``h``-lattice of ``[0, 1]``.
    """
    from .duality import _steps, simplex_lattice

    N = _steps(h)
    per_cell = [simplex_lattice(len(idx), N) for idx in space.cells(t)]
    zs = []
    for combo in itertools.product(*[range(q.shape[0]) for q in per_cell]):
        z = np.empty(space.n_atoms)
        for idx, q, k in zip(space.cells(t), per_cell, combo):
            z[idx] = q[k] * space.probs[idx].sum() / space.probs[idx]
        zs.append(z)
    n_d = count_d_paths(space, t, N)
    if len(zs) * n_d > max_pairs:
        raise ValueError(f"{len(zs) * n_d} dual pairs exceed max_pairs")
    ds = list(_d_paths(space, t, N))
    return [(MartingaleDensity(space, t, z), Discounting(space, t, d)) for z in zs for d in ds]


def supermartingale_check(Q: MartingaleDensity, D: Discounting, mu: TimeMeasure | None = None,
                          tol: float = 1e-10) -> CheckReport:
    """Check that ``U_s = E[sum_{k>=s} Lambda_k mu_k | F_s]`` is a supermartingale with ``U_t = 1``.

    ``Lambda_k = M_k (D_k - D_{k+1}) / mu_k`` with ``D_{T+1} = 0``.
    """
    S, t = Q.space, Q.t
    mu = TimeMeasure.uniform(S) if mu is None else mu
    M = Q.martingale()
    g = D_to_gamma(D).gamma
    lam = M * g / mu.mu
    U = np.empty_like(lam)
    for s in range(S.T + 1):
        U[s] = cond_expectation(S, (lam[s:] * mu.mu[s:]).sum(axis=0), s)
    viol = []
    err = float(np.max(np.abs(U[t] - 1.0)))
    if err > tol:
        viol.append({"kind": "U_t != 1", "error": err})
    for s in range(t, S.T):
        drift = cond_expectation(S, U[s + 1], s) - U[s]
        if np.any(drift > tol):
            viol.append({"kind": "supermartingale", "s": s, "excess": float(drift.max())})
    return CheckReport("supermartingale", not viol, S.T + 1 - t, err, viol)


def index_path(space: FilteredSpace, index, X: AdaptedProcess, t: int) -> np.ndarray:
    """Process-valued form of a conditional index at level ``t``.

    Rows before ``t`` carry the position itself (``X_s``); rows from ``t`` on
    carry ``index(space, X, t)``.
    """
    out = np.array(X.values, dtype=float)
    val = np.asarray(index(space, X, t), dtype=float)
    out[..., t:, :] = val[..., None, :]
    return out


def representation_consistency_check(space: FilteredSpace, path_fn, pool, t: int,
                                     rng: np.random.Generator, tol: float = 1e-9) -> CheckReport:
    """Check ``a_s = a_t`` for ``s >= t`` and that ``a_s`` only sees ``X_s`` for ``s < t``.

    ``path_fn(space, X, t)`` returns a ``(T+1, n)`` array.  Each row ``s < t``
    is compared against the output for a copy of ``X`` whose other rows were
    redrawn.
    """
    viol = []
    err = 0.0
    checked = 0
    for X in pool:
        a = np.asarray(path_fn(space, X, t), dtype=float)
        for s in range(t + 1, space.T + 1):
            same = ext_close(a[s], a[t], tol)
            checked += 1
            if not np.all(same):
                viol.append({"kind": "not constant after t", "s": s, "t": t})
        for s in range(t):
            v = X.values.copy()
            for k in range(space.T + 1):
                if k != s:
                    noise = rng.normal(size=len(space.cells(k)))
                    v[k] = v[k] + noise[space.labels(k)]
            b = np.asarray(path_fn(space, X.with_values(v), t), dtype=float)
            with np.errstate(invalid="ignore"):
                d = np.where(a[s] == b[s], 0.0, np.abs(a[s] - b[s]))
            err = max(err, float(np.nanmax(d)))
            checked += 1
            if np.any(~(d <= tol)):
                viol.append({"kind": "depends on other rows", "s": s, "t": t})
    return CheckReport("representation_consistency", not viol, checked, err, viol)
