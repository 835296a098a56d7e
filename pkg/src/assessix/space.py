"""Finite filtered probability spaces and conditional calculus on them.

Random variables are per-atom arrays whose last axis runs over atoms; any
leading axes are treated as a batch.  A *level* is a partition index
``t = 0..T``; ``None`` stands for the full power set of atoms (every random
variable is measurable there).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ._report import CheckReport
from .errors import InvalidSpace, NotAPartition, NotAdapted, NotMeasurable, ZeroCellMass
from .extended import INF, NINF, ext_close, ext_mul, ext_sum

Level = "int | None"


class FilteredSpace:
    """Atoms with positive probabilities and a refining sequence of partitions.

    Parameters
    ----------
    probs : sequence of float
        Atom probabilities, all positive, summing to one within 1e-12.
    partitions : sequence of partitions
        ``partitions[t]`` is a list of cells, each cell a list of 0-based atom
        indices.  Each partition must refine the previous one.

    Examples
    --------
    >>> S = FilteredSpace([0.25] * 4, [[[0, 1, 2, 3]], [[0, 1], [2, 3]]])
    >>> S.T, S.n_atoms
    (1, 4)
    >>> cond_expectation(S, [4, 2, 6, 0], 1).tolist()
    [3.0, 3.0, 3.0, 3.0]
    """

    def __init__(self, probs: Sequence[float], partitions: Sequence[Sequence[Sequence[int]]]):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidSpace("probs must be a nonempty vector")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise InvalidSpace("every atom needs a positive finite probability")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InvalidSpace(f"probabilities sum to {p.sum()!r}, not 1")
        if len(partitions) == 0:
            raise InvalidSpace("need at least one partition")
        n = p.size
        labels = []
        cells = []
        for t, part in enumerate(partitions):
            lab = np.full(n, -1, dtype=int)
            cs = []
            for k, cell in enumerate(part):
                idx = np.asarray(sorted(int(a) for a in cell), dtype=int)
                if idx.size == 0:
                    raise InvalidSpace(f"empty cell in partition {t}")
                if idx.min() < 0 or idx.max() >= n:
                    raise InvalidSpace(f"atom index out of range in partition {t}")
                if np.any(lab[idx] >= 0) or np.unique(idx).size != idx.size:
                    raise InvalidSpace(f"cells overlap in partition {t}")
                lab[idx] = k
                cs.append(idx)
            if np.any(lab < 0):
                raise InvalidSpace(f"partition {t} does not cover every atom")
            if t > 0:
                prev = labels[-1]
                for idx in cs:
                    if np.unique(prev[idx]).size != 1:
                        raise InvalidSpace(f"partition {t} does not refine partition {t - 1}")
            labels.append(lab)
            cells.append(tuple(cs))
        p.setflags(write=False)
        self.probs = p
        self._labels = tuple(labels)
        self._cells = tuple(cells)
        self._atomic_cells = tuple(np.array([i]) for i in range(n))
        self._cache: dict = {}

    @property
    def n_atoms(self) -> int:
        return self.probs.size

    @property
    def T(self) -> int:
        return len(self._labels) - 1

    @property
    def partitions(self) -> list[list[list[int]]]:
        return [[c.tolist() for c in cs] for cs in self._cells]

    def labels(self, level) -> np.ndarray:
        if level is None:
            return np.arange(self.n_atoms)
        return self._labels[self._level(level)]

    def cells(self, level) -> tuple[np.ndarray, ...]:
        if level is None:
            return self._atomic_cells
        return self._cells[self._level(level)]

    def _level(self, level: int) -> int:
        lv = int(level)
        if lv < 0 or lv > self.T:
            raise IndexError(f"level {level} outside 0..{self.T}")
        return lv

    def same_cell(self, level) -> np.ndarray:
        """Boolean matrix ``A[i, j]``: atoms i and j share a cell at ``level``."""
        key = ("same", level)
        if key not in self._cache:
            lab = self.labels(level)
            self._cache[key] = lab[:, None] == lab[None, :]
        return self._cache[key]

    def cond_matrix(self, level) -> np.ndarray:
        """Matrix ``M`` with ``E[X | F_level] = X @ M.T``."""
        key = ("cond", level)
        if key not in self._cache:
            w = self.same_cell(level) * self.probs[None, :]
            self._cache[key] = w / w.sum(axis=1, keepdims=True)
        return self._cache[key]

    def cell_weights(self, level) -> np.ndarray:
        """Matrix ``W`` (atoms x cells) of conditional atom probabilities per cell."""
        key = ("cellw", level)
        if key not in self._cache:
            cs = self.cells(level)
            W = np.zeros((self.n_atoms, len(cs)))
            for c, idx in enumerate(cs):
                W[idx, c] = self.probs[idx] / self.probs[idx].sum()
            self._cache[key] = W
        return self._cache[key]

    def is_measurable(self, X, level, tol: float = 0.0) -> bool:
        X = np.asarray(X, dtype=float)
        if level is None:
            return True
        for idx in self.cells(level):
            block = X[..., idx]
            ref = block[..., :1]
            if not np.all(ext_close(block, ref, tol) if tol else block == ref):
                return False
        return True

    def cell_union(self, level, which: Iterable[int]) -> np.ndarray:
        """Atom mask of the union of the listed cells."""
        mask = np.zeros(self.n_atoms, dtype=bool)
        cs = self.cells(level)
        for k in which:
            mask[cs[k]] = True
        return mask

    def __repr__(self) -> str:
        return f"FilteredSpace(n_atoms={self.n_atoms}, T={self.T})"


@dataclass(frozen=True, eq=False)
class CondValue:
    """Extended-real random variable measurable at ``level``."""

    space: FilteredSpace
    level: int | None
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.space.n_atoms,):
            raise ValueError("values must have one entry per atom")
        if np.any(np.isnan(v)):
            raise ValueError("nan is not an extended real")
        if not self.space.is_measurable(v, self.level):
            raise NotMeasurable(f"values are not constant on the cells of level {self.level}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


class AdaptedProcess:
    """Finite process ``X_0..X_T`` with row ``s`` measurable at level ``s``.

    ``values`` has shape ``(..., T+1, n_atoms)``; leading axes form a batch of
    processes.  ``validate=False`` skips the adaptedness check, which is used
    internally for localized copies ``1_A X`` that need not be adapted.
    """

    __slots__ = ("space", "values")

    def __init__(self, space: FilteredSpace, values, validate: bool = True):
        v = np.array(values, dtype=float)
        if v.ndim < 2 or v.shape[-2:] != (space.T + 1, space.n_atoms):
            raise ValueError(f"process needs shape (..., {space.T + 1}, {space.n_atoms}), got {v.shape}")
        if validate:
            if not np.all(np.isfinite(v)):
                raise ValueError("process values must be finite")
            for s in range(space.T + 1):
                for k, idx in enumerate(space.cells(s)):
                    block = v[..., s, idx]
                    if np.any(block != block[..., :1]):
                        raise NotAdapted(f"row {s} is not constant on cell {k} {idx.tolist()}")
        v.setflags(write=False)
        self.space = space
        self.values = v

    @property
    def T(self) -> int:
        return self.space.T

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.values.shape[:-2]

    def row(self, s: int) -> np.ndarray:
        return self.values[..., s, :]

    def increments(self) -> np.ndarray:
        """``dX_s = X_s - X_{s-1}`` with ``X_{-1} = 0``."""
        v = self.values
        return np.concatenate([v[..., :1, :], np.diff(v, axis=-2)], axis=-2)

    def masked(self, mask) -> "AdaptedProcess":
        m = np.asarray(mask, dtype=bool)
        return AdaptedProcess(self.space, np.where(m, self.values, 0.0), validate=False)

    def with_values(self, values, validate: bool = False) -> "AdaptedProcess":
        return AdaptedProcess(self.space, values, validate=validate)

    def __getitem__(self, key) -> "AdaptedProcess":
        """Index the batch axes."""
        return AdaptedProcess(self.space, self.values[key], validate=False)

    def __repr__(self) -> str:
        return f"AdaptedProcess(batch={self.batch_shape}, T={self.T})"


def _values(X) -> np.ndarray:
    if isinstance(X, (CondValue,)):
        return X.values
    if isinstance(X, AdaptedProcess):
        raise TypeError("expected a random variable, got a process")
    return np.asarray(X, dtype=float)


def cond_expectation(space: FilteredSpace, X, level, weights=None) -> np.ndarray:
    """``E[w X | F_level] / E[w | F_level]`` cellwise.

    Atoms with zero weight contribute nothing even if ``X`` is infinite there.
    A cell of zero weighted mass is allowed only when ``X`` is constant on it,
    in which case that constant is returned.
    """
    x = _values(X)
    n = space.n_atoms
    if x.shape[-1] != n:
        raise ValueError("last axis must run over atoms")
    if weights is None and np.all(np.isfinite(x)):
        # one value per cell, broadcast back, so results are exactly cell-constant
        return (x @ space.cell_weights(level))[..., space.labels(level)]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    pw = np.broadcast_to(space.probs * w, np.broadcast_shapes(x.shape, w.shape))
    x = np.broadcast_to(x, pw.shape)
    out = np.empty(pw.shape)
    for idx in space.cells(level):
        mass = pw[..., idx].sum(axis=-1)
        num = ext_sum(ext_mul(pw[..., idx], x[..., idx]), axis=-1)
        blk = x[..., idx]
        const = np.all(blk == blk[..., :1], axis=-1)
        if np.any((mass == 0) & ~const):
            raise ZeroCellMass(f"zero weighted mass on cell {idx.tolist()}")
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(mass > 0, num / np.where(mass > 0, mass, 1.0), blk[..., 0])
        out[..., idx] = val[..., None]
    return out


def cond_extremum(space: FilteredSpace, X, level, mode: str = "sup") -> np.ndarray:
    """Cellwise maximum (``"sup"``) or minimum (``"inf"``)."""
    x = _values(X)
    if mode not in ("sup", "inf"):
        raise ValueError("mode must be 'sup' or 'inf'")
    red = np.max if mode == "sup" else np.min
    out = np.empty(x.shape)
    for idx in space.cells(level):
        out[..., idx] = red(x[..., idx], axis=-1, keepdims=True)
    return out


def cell_reduce(space: FilteredSpace, X, level, fn: Callable) -> np.ndarray:
    """Apply a reducer (``axis=-1, keepdims=True``) per cell and broadcast back."""
    x = np.asarray(X)
    out = np.empty(x.shape, dtype=np.result_type(x, float))
    for idx in space.cells(level):
        out[..., idx] = fn(x[..., idx], axis=-1, keepdims=True)
    return out


def glue(space: FilteredSpace, parts: Sequence[tuple[Sequence[int], object]], level) -> np.ndarray:
    """``sum_i 1_{A_i} X_i`` for a partition ``A_i`` measurable at ``level``."""
    n = space.n_atoms
    cover = np.zeros(n, dtype=int)
    out = np.full(n, np.nan)
    lab = space.labels(level)
    for A, X in parts:
        idx = np.asarray(list(A), dtype=int)
        if idx.size == 0:
            raise NotAPartition("empty part")
        cover[idx] += 1
        mask = np.zeros(n, dtype=bool)
        mask[idx] = True
        if np.any(mask != np.isin(lab, lab[idx])):
            raise NotMeasurable(f"set {sorted(idx.tolist())} is not a union of level-{level} cells")
        x = _values(X)
        if isinstance(X, CondValue) and X.level != level:
            raise NotMeasurable("all parts must live at the target level")
        if not space.is_measurable(x, level):
            raise NotMeasurable("part is not measurable at the target level")
        out[idx] = x[idx]
    if np.any(cover != 1):
        raise NotAPartition("parts do not partition the atoms")
    return out


def localize(X, mask):
    """``1_A X`` for random variables or processes."""
    if isinstance(X, AdaptedProcess):
        return X.masked(mask)
    x = _values(X)
    return np.where(mask, x, 0.0)


def cell_unions(n_cells: int, rng: np.random.Generator, max_enumerate: int = 12,
                n_random: int = 64) -> list[tuple[int, ...]]:
    if n_cells <= max_enumerate:
        return [tuple(k for k in range(n_cells) if (b >> k) & 1) for b in range(1 << n_cells)]
    picks = rng.random((n_random, n_cells)) < 0.5
    return [tuple(np.flatnonzero(row).tolist()) for row in picks]


def check_local(F: Callable, space: FilteredSpace, level, samples: Sequence, tol: float = 1e-9,
                seed: int = 0, max_enumerate: int = 12, n_random: int = 64) -> CheckReport:
    """Check ``1_A F(X) = 1_A F(1_A X)`` for cell unions ``A`` at ``level``.

    ``F`` maps a sample (random variable or process) to per-atom values.
    """
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    unions = cell_unions(len(space.cells(level)), rng, max_enumerate, n_random)
    checked = 0
    worst = 0.0
    for si, X in enumerate(samples):
        base = np.asarray(F(X), dtype=float)
        for U in unions:
            mask = space.cell_union(level, U)
            if not mask.any():
                continue
            loc = np.asarray(F(localize(X, mask)), dtype=float)
            ok = ext_close(base[..., mask], loc[..., mask], tol)
            checked += int(mask.sum())
            fin = np.isfinite(base[..., mask]) & np.isfinite(loc[..., mask])
            if np.any(fin):
                diff = np.abs(np.where(fin, base[..., mask] - np.where(fin, loc[..., mask], 0.0), 0.0))
                worst = max(worst, float(diff.max()))
            if not np.all(ok):
                j = int(np.flatnonzero(~ok.reshape(-1, ok.shape[-1]).all(axis=0))[0])
                atom = int(np.flatnonzero(mask)[j])
                return CheckReport("locality", False, checked, worst, [{
                    "sample": si, "union_cells": list(U), "atom": atom,
                    "F(X)": base[..., atom], "F(1_A X)": loc[..., atom]}])
    return CheckReport("locality", True, checked, worst, details={"unions": len(unions)})
