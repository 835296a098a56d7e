"""Extended-real arithmetic and increasing functions on the extended line.

Values live in ``[-inf, +inf]`` and are stored as IEEE floats.  The sum
``inf + (-inf)`` is resolved by a convention: ``"concave"`` (the default)
maps it to ``-inf``, ``"hypograph"`` maps it to ``+inf``.  Products with a
zero factor are zero.

An increasing function ``F`` on the extended line is stored through its
completed graph: the monotone chain in the extended plane that runs from
``(-inf, -inf)`` to ``(+inf, +inf)``, following ``F`` and filling every jump
with a vertical piece and every flat stretch with a horizontal piece.  The
lower and upper selections of that chain are the left- and right-continuous
versions of ``F``, and the generalized inverses are the lower and upper
selections of the transposed chain.  Transposition only swaps coordinates
(and the two callables of curved pieces), so inverting twice reproduces the
original chain bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import NotMonotone

INF = float("inf")
NINF = float("-inf")

CONVENTIONS = ("concave", "hypograph")


def _check_convention(convention: str) -> None:
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")


def ext_add(a, b, convention: str = "concave"):
    """Add with ``inf + (-inf)`` resolved by ``convention``.

    >>> float(ext_add(float("inf"), float("-inf")))
    -inf
    >>> float(ext_add(float("inf"), float("-inf"), "hypograph"))
    inf
    """
    _check_convention(convention)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        out = a + b
    clash = np.isinf(a) & np.isinf(b) & (np.sign(a) != np.sign(b))
    if np.any(clash):
        out = np.where(clash, NINF if convention == "concave" else INF, out)
    return out


def ext_neg(a):
    return -np.asarray(a, dtype=float)


def ext_sub(a, b, convention: str = "concave"):
    return ext_add(a, ext_neg(b), convention)


def ext_mul(a, b):
    """Multiply with ``0 * (+-inf) = 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        out = a * b
    zero = (a == 0) | (b == 0)
    if np.any(zero):
        out = np.where(zero, 0.0, out)
    return out


def ext_sum(a, axis=-1, convention: str = "concave"):
    """Sum along ``axis`` using the chosen convention for opposite infinities."""
    _check_convention(convention)
    a = np.asarray(a, dtype=float)
    finite = np.where(np.isfinite(a), a, 0.0).sum(axis=axis)
    has_pos = np.any(a == INF, axis=axis)
    has_neg = np.any(a == NINF, axis=axis)
    both = has_pos & has_neg
    out = np.where(has_pos, INF, finite)
    out = np.where(has_neg, NINF, out)
    if np.any(both):
        out = np.where(both, NINF if convention == "concave" else INF, out)
    return out


def ext_close(a, b, tol: float = 1e-9, rel: bool = False):
    """Atomwise closeness; equal infinities compare equal."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    same = a == b
    with np.errstate(invalid="ignore"):
        diff = np.abs(a - b)
        bound = tol * np.maximum(1.0, np.abs(a)) if rel else tol
        near = np.isfinite(a) & np.isfinite(b) & (diff <= bound)
    return same | near


# ---------------------------------------------------------------------------
# monotone chains


@dataclass(frozen=True)
class Piece:
    """Monotone piece of a completed graph from ``(x0, y0)`` to ``(x1, y1)``.

    Pieces with ``x0 == x1`` are vertical (a jump), pieces with ``y0 == y1`` are
    horizontal (a flat).  Any other piece is strictly increasing; it is linear
    between finite endpoints unless ``f`` (and its inverse ``finv``) is given,
    which is required when an endpoint is infinite.
    """

    x0: float
    y0: float
    x1: float
    y1: float
    f: Callable | None = None
    finv: Callable | None = None

    def __post_init__(self):
        for v in (self.x0, self.y0, self.x1, self.y1):
            if np.isnan(v):
                raise NotMonotone("nan endpoint")
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise NotMonotone(f"decreasing piece {self.start} -> {self.end}")
        if self.x0 == self.x1 and self.y0 == self.y1:
            raise NotMonotone("degenerate piece")
        if self.kind == "curve" and self.f is None:
            if not all(np.isfinite([self.x0, self.y0, self.x1, self.y1])):
                raise NotMonotone("curved piece with infinite endpoint needs f and finv")

    @property
    def start(self) -> tuple[float, float]:
        return (self.x0, self.y0)

    @property
    def end(self) -> tuple[float, float]:
        return (self.x1, self.y1)

    @property
    def kind(self) -> str:
        if self.x0 == self.x1:
            return "vertical"
        if self.y0 == self.y1:
            return "horizontal"
        return "curve"

    def transpose(self) -> "Piece":
        return Piece(self.y0, self.x0, self.y1, self.x1, self.finv, self.f)

    def interior(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "horizontal":
            return np.full_like(x, self.y0)
        if self.f is not None:
            return np.asarray(self.f(x), dtype=float)
        return self.y0 + (x - self.x0) * (self.y1 - self.y0) / (self.x1 - self.x0)


def _linear(slope: float, x0: float, y0: float) -> tuple[Callable, Callable]:
    return (lambda x: y0 + slope * (x - x0)), (lambda y: x0 + (y - y0) / slope)


class Monotone:
    """Increasing map of the extended line, stored as a completed graph.

    Parameters
    ----------
    pieces : sequence of Piece
        Contiguous chain from ``(-inf, -inf)`` to ``(+inf, +inf)``.
    side : {"upper", "lower"}
        Value taken at finite jumps.  ``"upper"`` gives a right-continuous map.
    at_neg_inf, at_pos_inf : float, optional
        Values at the two infinities.  They default to the one-sided limits.
    """

    __slots__ = ("pieces", "side", "at_neg_inf", "at_pos_inf")

    def __init__(self, pieces: Sequence[Piece], side: str = "upper",
                 at_neg_inf: float | None = None, at_pos_inf: float | None = None):
        pieces = tuple(pieces)
        if not pieces:
            raise NotMonotone("empty chain")
        if pieces[0].start != (NINF, NINF) or pieces[-1].end != (INF, INF):
            raise NotMonotone("chain must run from (-inf,-inf) to (inf,inf)")
        for a, b in zip(pieces, pieces[1:]):
            if a.end != b.start:
                raise NotMonotone(f"chain is not contiguous at {a.end} / {b.start}")
        if side not in ("upper", "lower"):
            raise ValueError("side must be 'upper' or 'lower'")
        self.pieces = pieces
        self.side = side
        lo_lim = float(self.upper(NINF))
        hi_lim = float(self.lower(INF))
        if at_neg_inf is None:
            at_neg_inf = lo_lim
        if at_pos_inf is None:
            at_pos_inf = hi_lim
        if at_neg_inf > lo_lim:
            raise NotMonotone("value at -inf exceeds the right limit there")
        if at_pos_inf < hi_lim:
            raise NotMonotone("value at +inf is below the left limit there")
        self.at_neg_inf = float(at_neg_inf)
        self.at_pos_inf = float(at_pos_inf)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_vertices(cls, vertices: Sequence[tuple[float, float]],
                      left: Union[str, tuple] = "flat", right: Union[str, tuple] = "flat",
                      side: str = "upper", at_neg_inf=None, at_pos_inf=None) -> "Monotone":
        """Piecewise-linear map through finite ``vertices``.

        Consecutive vertices sharing ``x`` form a jump, sharing ``y`` a flat.
        ``left`` / ``right`` describe the tails: ``"flat"``, ``"vertical"`` (the
        map is infinite beyond the end vertex) or ``("slope", a)`` with ``a > 0``.

        >>> F = Monotone.from_vertices([(0, 0), (1, 2)], ("slope", 2), ("slope", 2))
        >>> float(F(3.0))
        6.0
        """
        vs = [(float(x), float(y)) for x, y in vertices]
        if not vs:
            raise NotMonotone("need at least one vertex")
        if not all(np.isfinite(v).all() for v in vs):
            raise NotMonotone("vertices must be finite")
        pieces: list[Piece] = []
        x0, y0 = vs[0]
        if left == "flat":
            pieces += [Piece(NINF, NINF, NINF, y0), Piece(NINF, y0, x0, y0)]
        elif left == "vertical":
            pieces += [Piece(NINF, NINF, x0, NINF), Piece(x0, NINF, x0, y0)]
        else:
            a = _slope(left)
            f, g = _linear(a, x0, y0)
            pieces.append(Piece(NINF, NINF, x0, y0, f, g))
        for (xa, ya), (xb, yb) in zip(vs, vs[1:]):
            if (xa, ya) == (xb, yb):
                continue
            pieces.append(Piece(xa, ya, xb, yb))
        xn, yn = vs[-1]
        if right == "flat":
            pieces += [Piece(xn, yn, INF, yn), Piece(INF, yn, INF, INF)]
        elif right == "vertical":
            pieces += [Piece(xn, yn, xn, INF), Piece(xn, INF, INF, INF)]
        else:
            a = _slope(right)
            f, g = _linear(a, xn, yn)
            pieces.append(Piece(xn, yn, INF, INF, f, g))
        return cls(_merge(pieces), side, at_neg_inf, at_pos_inf)

    @classmethod
    def linear(cls, slope: float, intercept: float = 0.0) -> "Monotone":
        if slope == 0:
            return cls.constant(intercept)
        if slope < 0:
            raise NotMonotone("negative slope")
        f, g = _linear(slope, 0.0, intercept)
        return cls([Piece(NINF, NINF, INF, INF, f, g)])

    @classmethod
    def constant(cls, c: float) -> "Monotone":
        c = float(c)
        if c == INF:
            return cls([Piece(NINF, NINF, NINF, INF), Piece(NINF, INF, INF, INF)])
        if c == NINF:
            return cls([Piece(NINF, NINF, INF, NINF), Piece(INF, NINF, INF, INF)])
        return cls([Piece(NINF, NINF, NINF, c), Piece(NINF, c, INF, c), Piece(INF, c, INF, INF)])

    @classmethod
    def from_function(cls, f: Callable, finv: Callable,
                      lo: float = NINF, hi: float = INF) -> "Monotone":
        """Continuous strictly increasing ``f`` on the real line onto ``(lo, hi)``.

        >>> E = Monotone.from_function(np.exp, np.log, lo=0.0)
        >>> float(inverse(E, "right")(0.0))
        -inf
        """
        pieces = []
        if lo > NINF:
            pieces.append(Piece(NINF, NINF, NINF, lo))
        pieces.append(Piece(NINF, lo, INF, hi, f, finv))
        if hi < INF:
            pieces.append(Piece(INF, hi, INF, INF))
        return cls(pieces)

    # -- evaluation -------------------------------------------------------

    def _range(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        lo = np.full(x.shape, INF)
        hi = np.full(x.shape, NINF)
        for p in self.pieces:
            m = (x >= p.x0) & (x <= p.x1)
            if not np.any(m):
                continue
            if p.kind == "vertical":
                lo = np.where(m, np.minimum(lo, p.y0), lo)
                hi = np.where(m, np.maximum(hi, p.y1), hi)
                continue
            y = np.full(x.shape, np.nan)
            at0 = m & (x == p.x0)
            at1 = m & (x == p.x1)
            mid = m & ~at0 & ~at1
            y[at0] = p.y0
            y[at1] = p.y1
            if np.any(mid):
                y[mid] = p.interior(x[mid])
            lo = np.where(m, np.minimum(lo, y), lo)
            hi = np.where(m, np.maximum(hi, y), hi)
        return lo, hi

    def lower(self, x):
        """Left-continuous version, evaluated at ``x``."""
        return self._range(x)[0]

    def upper(self, x):
        """Right-continuous version, evaluated at ``x``."""
        return self._range(x)[1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self._range(x)
        out = lo if self.side == "lower" else hi
        out = np.where(x == NINF, self.at_neg_inf, out)
        return np.where(x == INF, self.at_pos_inf, out)

    # -- structure --------------------------------------------------------

    def transpose(self) -> "Monotone":
        return Monotone([p.transpose() for p in self.pieces])

    def same_graph(self, other: "Monotone") -> bool:
        if len(self.pieces) != len(other.pieces):
            return False
        for p, q in zip(self.pieces, other.pieces):
            if (p.start, p.end) != (q.start, q.end) or p.f is not q.f or p.finv is not q.finv:
                return False
        return True

    def __repr__(self) -> str:
        pts = [self.pieces[0].start] + [p.end for p in self.pieces]
        return f"Monotone({pts}, side={self.side!r})"


def _slope(spec) -> float:
    if not (isinstance(spec, tuple) and len(spec) == 2 and spec[0] == "slope"):
        raise ValueError(f"bad tail specification {spec!r}")
    a = float(spec[1])
    if not a > 0:
        raise NotMonotone("tail slope must be positive")
    return a


def _merge(pieces: list[Piece]) -> list[Piece]:
    out: list[Piece] = []
    for p in pieces:
        if out:
            q = out[-1]
            if p.kind == q.kind == "vertical" and p.x0 == q.x0:
                out[-1] = Piece(q.x0, q.y0, p.x1, p.y1)
                continue
            if p.kind == q.kind == "horizontal" and p.y0 == q.y0:
                out[-1] = Piece(q.x0, q.y0, p.x1, p.y1)
                continue
        out.append(p)
    return out


class MonotoneFn:
    """Conditional increasing function: one :class:`Monotone` per atom.

    Evaluation is atomwise, so the map is local by construction.
    """

    def __init__(self, atoms: Sequence[Monotone]):
        self.atoms = tuple(atoms)

    @classmethod
    def broadcast(cls, F: Monotone, n: int) -> "MonotoneFn":
        return cls([F] * n)

    @classmethod
    def glue(cls, mask, a: "MonotoneFn", b: "MonotoneFn") -> "MonotoneFn":
        """``1_A a + 1_{A^c} b`` for the atom mask ``A``."""
        return cls([fa if m else fb for m, fa, fb in zip(mask, a.atoms, b.atoms)])

    def __len__(self) -> int:
        return len(self.atoms)

    def _apply(self, name: str, m):
        m = np.asarray(m, dtype=float)
        if m.shape[-1] != len(self.atoms):
            raise ValueError("argument does not match the number of atoms")
        out = np.empty(m.shape)
        for i, F in enumerate(self.atoms):
            out[..., i] = getattr(F, name)(m[..., i])
        return out

    def __call__(self, m):
        return self._apply("__call__", m)

    def lower(self, m):
        return self._apply("lower", m)

    def upper(self, m):
        return self._apply("upper", m)


def continuous_version(F, side: str):
    """Left (``"left"``) or right (``"right"``) continuous version of ``F``.

    The left version takes ``-inf`` at ``-inf``, the right version ``+inf`` at
    ``+inf``; elsewhere they are the lower and upper selections of the graph.
    """
    if isinstance(F, MonotoneFn):
        return MonotoneFn([continuous_version(f, side) for f in F.atoms])
    if side == "left":
        return Monotone(F.pieces, "lower", NINF, float(F.lower(INF)))
    if side == "right":
        return Monotone(F.pieces, "upper", float(F.upper(NINF)), INF)
    raise ValueError("side must be 'left' or 'right'")


def inverse(F, side: str):
    """Left or right generalized inverse.

    The left inverse is ``s -> inf{m : F(m) >= s}`` and the right inverse is
    ``s -> sup{m : F(m) <= s}``, with the usual conventions outside the range
    of ``F``.  Neither depends on the values ``F`` takes at its jumps.

    >>> F = Monotone.from_vertices([(0, 0), (0, 1)])
    >>> float(inverse(F, "left")(0.5)), float(inverse(F, "right")(1.0))
    (0.0, inf)
    """
    if isinstance(F, MonotoneFn):
        return MonotoneFn([inverse(f, side) for f in F.atoms])
    return continuous_version(F.transpose(), side)


def galois_check(F, grid_m, grid_s, tol: float = 1e-12) -> "CheckReport":
    """Exhaustively check the Galois relations on ``grid_m x grid_s``.

    Verified per atom:

    * ``F_-(m) <= s``  iff  ``m <= F_r(s)``
    * ``F_+(m) >= s``  iff  ``m >= F_l(s)``
    * for ``G`` either inverse and ``F(-inf) < s < F(inf)``:
      ``F_-(G(s)) <= s <= F_+(G(s))``, up to a relative ``tol`` since ``G(s)``
      is rounded where the slope is not a power of two
    """
    from ._report import CheckReport

    fns = F.atoms if isinstance(F, MonotoneFn) else (F,)
    m = np.asarray(grid_m, dtype=float)
    s = np.asarray(grid_s, dtype=float)
    viol: list[dict] = []
    checked = 0
    for a, f in enumerate(fns):
        fl, fr = inverse(f, "left"), inverse(f, "right")
        lo_m, hi_m = f.lower(m), f.upper(m)
        gl, gr = fl(s), fr(s)
        c3 = (lo_m[:, None] <= s[None, :]) == (m[:, None] <= gr[None, :])
        c4 = (hi_m[:, None] >= s[None, :]) == (m[:, None] >= gl[None, :])
        checked += 2 * c3.size
        for name, ok in (("C3", c3), ("C4", c4)):
            bad = np.argwhere(~ok)
            for i, j in bad[:3]:
                viol.append({"rule": name, "atom": a, "m": m[i], "s": s[j]})
        inside = (f.at_neg_inf < s) & (s < f.at_pos_inf)
        for name, g in (("sandwich_left", gl), ("sandwich_right", gr)):
            slack = tol * np.maximum(1.0, np.abs(np.where(np.isfinite(s), s, 0.0)))
            ok = (f.lower(g) <= s + slack) & (s - slack <= f.upper(g))
            ok |= ~inside
            checked += int(inside.sum())
            for j in np.flatnonzero(~ok)[:3]:
                viol.append({"rule": name, "atom": a, "s": s[j], "G": g[j]})
    return CheckReport("galois", not viol, checked, 0.0, viol[:20])
