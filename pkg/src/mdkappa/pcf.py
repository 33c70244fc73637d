"""Piecewise-constant functions on [0, 1) with rational breakpoints and exact values.

A :class:`PCF` is stored canonically: breakpoints start at 0, strictly
increase, stay below 1, and adjacent pieces never carry equal values.  The
value at a breakpoint is the value of the piece to its right.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .errors import ValidationError
from .radical import RadScalar, as_fraction, rad
from .sets import SimpleSet

__all__ = [
    "PCF",
    "align",
    "lincomb",
    "pcf_arith",
    "integrate",
    "inner",
    "lp_norm",
    "Norm",
    "super_level_measure",
    "level_measure",
    "joint_level_measure",
    "Antiderivative",
    "pointwise_max",
]

_ZERO = RadScalar(0)
_CMP = {
    ">": lambda s: s > 0,
    ">=": lambda s: s >= 0,
    "<": lambda s: s < 0,
    "<=": lambda s: s <= 0,
}


class PCF:
    __slots__ = ("breaks", "values", "_hash")

    def __init__(self, breaks: Sequence, values: Sequence, *, _trusted: bool = False):
        if _trusted:
            b, v = breaks, values
        else:
            b = [as_fraction(x) for x in breaks]
            v = [rad(x) for x in values]
            if not b or b[0] != 0 or len(b) != len(v):
                raise ValidationError("breakpoints must start at 0 and match the values")
            for x, y in zip(b, b[1:]):
                if not x < y:
                    raise ValidationError("breakpoints must strictly increase")
            if b[-1] >= 1:
                raise ValidationError("last breakpoint must be < 1")
        # merge equal neighbours
        nb, nv = [b[0]], [v[0]]
        for x, y in zip(b[1:], v[1:]):
            if y != nv[-1]:
                nb.append(x)
                nv.append(y)
        self.breaks: tuple[Fraction, ...] = tuple(nb)
        self.values: tuple[RadScalar, ...] = tuple(nv)
        self._hash = None

    # -- construction ----------------------------------------------------

    @classmethod
    def constant(cls, value=1) -> "PCF":
        return cls((Fraction(0),), (rad(value),), _trusted=True)

    @classmethod
    def zero(cls) -> "PCF":
        return cls.constant(0)

    @classmethod
    def indicator(cls, a: SimpleSet, value=1) -> "PCF":
        return cls.from_pieces([(iv.lo, iv.hi, value) for iv in a])

    @classmethod
    def from_pieces(cls, pieces: Iterable) -> "PCF":
        """Build from disjoint ``(lo, hi, value)`` pieces; gaps are zero."""
        items = sorted((as_fraction(lo), as_fraction(hi), rad(v)) for lo, hi, v in pieces)
        b: list[Fraction] = []
        v: list[RadScalar] = []
        cur = Fraction(0)
        for lo, hi, val in items:
            if lo < cur or not lo < hi or hi > 1:
                raise ValidationError(f"overlapping or invalid piece [{lo},{hi})")
            if lo > cur:
                b.append(cur)
                v.append(_ZERO)
            b.append(lo)
            v.append(val)
            cur = hi
        if cur < 1:
            b.append(cur)
            v.append(_ZERO)
        return cls(b, v, _trusted=True)

    @classmethod
    def from_atoms(cls, breaks: Sequence[Fraction], values: Sequence[RadScalar]) -> "PCF":
        return cls(breaks, values, _trusted=True)

    # -- access -----------------------------------------------------------

    def __call__(self, x) -> RadScalar:
        x = as_fraction(x)
        if not 0 <= x < 1:
            raise ValueError("PCF is defined on [0, 1)")
        return self.values[bisect_right(self.breaks, x) - 1]

    def ends(self) -> list[Fraction]:
        return list(self.breaks[1:]) + [Fraction(1)]

    def pieces(self):
        ends = self.ends()
        for lo, hi, v in zip(self.breaks, ends, self.values):
            yield lo, hi, v

    def lengths(self) -> list[Fraction]:
        return [hi - lo for lo, hi in zip(self.breaks, self.ends())]

    def __len__(self):
        return len(self.breaks)

    def support(self) -> SimpleSet:
        return SimpleSet._from_pairs([(lo, hi) for lo, hi, v in self.pieces() if v])

    def __eq__(self, other):
        return (
            isinstance(other, PCF)
            and self.breaks == other.breaks
            and self.values == other.values
        )

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.breaks, self.values))
        return self._hash

    def __repr__(self):
        body = ", ".join(f"[{lo},{hi}):{v}" for lo, hi, v in self.pieces())
        return f"PCF({body})"

    # -- algebra -----------------------------------------------------------

    def map_values(self, fn: Callable[[RadScalar], RadScalar]) -> "PCF":
        return PCF(self.breaks, [fn(v) for v in self.values], _trusted=True)

    def _binop(self, other, fn) -> "PCF":
        if not isinstance(other, PCF):
            other = PCF.constant(other)
        b, (fv, gv) = align([self, other])
        return PCF(b, [fn(x, y) for x, y in zip(fv, gv)], _trusted=True)

    def __add__(self, other):
        return self._binop(other, lambda x, y: x + y)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binop(other, lambda x, y: x - y)

    def __rsub__(self, other):
        return PCF.constant(other) - self

    def __mul__(self, other):
        if isinstance(other, PCF):
            return self._binop(other, lambda x, y: x * y)
        c = rad(other)
        return self.map_values(lambda v: v * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.map_values(lambda v: -v)

    def __abs__(self):
        return self.map_values(abs)

    def scale(self, c) -> "PCF":
        return self * c

    def maximum(self, other) -> "PCF":
        return self._binop(other, lambda x, y: x if x >= y else y)

    def minimum(self, other) -> "PCF":
        return self._binop(other, lambda x, y: x if x <= y else y)

    def square(self) -> "PCF":
        return self.map_values(lambda v: v * v)

    def restrict(self, a: SimpleSet) -> "PCF":
        """``f * 1_a``."""
        return self * PCF.indicator(a)

    def is_constant_on(self, a: SimpleSet) -> bool:
        vals = set()
        for iv in a:
            i = bisect_right(self.breaks, iv.lo) - 1
            j = bisect_left(self.breaks, iv.hi)
            vals.update(self.values[i:j])
            if len(vals) > 1:
                return False
        return True

    def integrate(self, over: SimpleSet | None = None) -> RadScalar:
        return integrate(self, over)


def align(fs: Sequence[PCF]) -> tuple[list[Fraction], list[list[RadScalar]]]:
    """Common refinement: atom starts and each function's value on every atom."""
    if len(fs) == 1:
        return list(fs[0].breaks), [list(fs[0].values)]
    allb = set()
    for f in fs:
        allb.update(f.breaks)
    b = sorted(allb)
    cols = []
    for f in fs:
        fb, fv = f.breaks, f.values
        if len(fb) == 1:
            cols.append([fv[0]] * len(b))
            continue
        col = []
        i = 0
        nxt = fb[1]
        last = len(fb) - 1
        for x in b:
            while i < last and x >= nxt:
                i += 1
                nxt = fb[i + 1] if i < last else None
            col.append(fv[i])
        cols.append(col)
    return b, cols


def atom_lengths(breaks: Sequence[Fraction]) -> list[Fraction]:
    ends = list(breaks[1:]) + [Fraction(1)]
    return [hi - lo for lo, hi in zip(breaks, ends)]


def lincomb(coeffs: Sequence, fs: Sequence[PCF]) -> PCF:
    """Exact ``sum_i coeffs[i] * fs[i]`` by a jump sweep (cheap for many sparse terms)."""
    deltas: dict[Fraction, RadScalar] = {}
    for c, f in zip(coeffs, fs):
        c = rad(c)
        if not c:
            continue
        prev = _ZERO
        for x, v in zip(f.breaks, f.values):
            d = (v - prev) * c
            if d:
                cur = deltas.get(x)
                deltas[x] = d if cur is None else cur + d
            prev = v
    if not deltas:
        return PCF.zero()
    xs = sorted(deltas)
    b, v = [], []
    acc = _ZERO
    if xs[0] != 0:
        b.append(Fraction(0))
        v.append(_ZERO)
    for x in xs:
        acc = acc + deltas[x]
        b.append(x)
        v.append(acc)
    return PCF(b, v, _trusted=True)


def pointwise_max(fs: Sequence[PCF]) -> PCF:
    b, cols = align(fs)
    out = []
    for vals in zip(*cols):
        m = vals[0]
        for v in vals[1:]:
            if v > m:
                m = v
        out.append(m)
    return PCF(b, out, _trusted=True)


_OPS = {
    "add": lambda f, g: f + g,
    "sub": lambda f, g: f - g,
    "mul": lambda f, g: f * g,
    "max": lambda f, g: f.maximum(g),
    "min": lambda f, g: f.minimum(g),
}


def pcf_arith(f: PCF, g, op: str) -> PCF:
    """Dispatch for ``add|sub|mul|scale|abs|max|min``; ``g`` is a scalar for ``scale``."""
    if op == "abs":
        return abs(f)
    if op == "scale":
        return f * rad(g)
    try:
        return _OPS[op](f, g)
    except KeyError:
        raise ValidationError(f"unknown op {op!r}") from None


def integrate(f: PCF, over: SimpleSet | None = None) -> RadScalar:
    if over is None:
        acc = _ZERO
        for lo, hi, v in f.pieces():
            if v:
                acc = acc + v * (hi - lo)
        return acc
    acc = _ZERO
    ends = f.ends()
    for iv in over:
        i = bisect_right(f.breaks, iv.lo) - 1
        while i < len(f.breaks) and f.breaks[i] < iv.hi:
            lo = max(f.breaks[i], iv.lo)
            hi = min(ends[i], iv.hi)
            v = f.values[i]
            if v and lo < hi:
                acc = acc + v * (hi - lo)
            i += 1
    return acc


def inner(f: PCF, g: PCF) -> RadScalar:
    b, (fv, gv) = align([f, g])
    acc = _ZERO
    for ln, x, y in zip(atom_lengths(b), fv, gv):
        if x and y:
            acc = acc + x * y * ln
    return acc


class Antiderivative:
    """``F(x) = int_0^x f`` evaluated exactly at arbitrary rational points."""

    def __init__(self, f: PCF):
        self.f = f
        acc = _ZERO
        cum = []
        for lo, hi, v in f.pieces():
            cum.append(acc)
            if v:
                acc = acc + v * (hi - lo)
        self._cum = cum
        self.total = acc

    def __call__(self, x) -> RadScalar:
        x = as_fraction(x)
        if x >= 1:
            return self.total
        if x <= 0:
            return _ZERO
        i = bisect_right(self.f.breaks, x) - 1
        v = self.f.values[i]
        base = self._cum[i]
        return base + v * (x - self.f.breaks[i]) if v else base


@dataclass(frozen=True)
class Norm:
    """A norm value; ``exact_sq`` holds ``||f||_2^2`` exactly when p = 2."""

    p: float
    value: float
    err: float
    exact_sq: RadScalar | None = None


def _sqrt_enclosure(lo: Fraction, hi: Fraction, bits: int = 80) -> tuple[Fraction, Fraction]:
    scale = 1 << bits
    lo = max(lo, Fraction(0))
    a = math.isqrt(math.floor(lo * scale * scale))
    b = math.isqrt(math.ceil(hi * scale * scale)) + 1
    return Fraction(a, scale), Fraction(b, scale)


def certified_sqrt(x: RadScalar) -> tuple[float, float]:
    """``sqrt(x)`` as a float plus an absolute error bound."""
    if x.is_zero():
        return 0.0, 0.0
    lo, hi = x.enclosure(1e-24)
    slo, shi = _sqrt_enclosure(lo, hi)
    mid = (slo + shi) / 2
    val = float(mid)
    err = float(shi - slo) / 2 + abs(val) * 2.0 ** -52
    return val, err


def lp_norm(f: PCF, p=2) -> Norm:
    """L^p norm on [0, 1); p = 2 keeps the exact square, ``p = inf`` gives the sup."""
    if p == 2:
        sq = integrate(f.square())
        val, err = certified_sqrt(sq)
        return Norm(2, val, err, sq)
    if p == math.inf or p == "inf":
        m = _ZERO
        for v in f.values:
            if abs(v) > m:
                m = abs(v)
        return Norm(math.inf, float(m), abs(float(m)) * 2.0 ** -52)
    import mpmath

    p = float(p)
    if p <= 0:
        raise ValidationError("p must be positive")
    with mpmath.workprec(120):
        acc = mpmath.mpf(0)
        for lo, hi, v in f.pieces():
            if v:
                lo_v, hi_v = abs(v).enclosure(1e-30)
                mid = (lo_v + hi_v) / 2
                val = mpmath.mpf(mid.numerator) / mid.denominator
                acc += (mpmath.mpf((hi - lo).numerator) / (hi - lo).denominator) * val ** p
        res = acc ** (1 / mpmath.mpf(p))
        return Norm(p, float(res), abs(float(res)) * 1e-15)


def _cond_mask(values: Sequence[RadScalar], lam, cmp: str) -> list[bool]:
    test = _CMP[cmp]
    lam = rad(lam)
    cache: dict = {}
    out = []
    for v in values:
        r = cache.get(v)
        if r is None:
            r = test((v - lam).sign())
            cache[v] = r
        out.append(r)
    return out


def level_measure(f: PCF, lam, cmp: str = ">") -> Fraction:
    """Exact ``|{x : f(x) cmp lam}|`` for ``cmp`` in ``> >= < <=``."""
    mask = _cond_mask(f.values, lam, cmp)
    return sum((ln for ln, m in zip(f.lengths(), mask) if m), Fraction(0))


def super_level_measure(f: PCF, lam, strict: bool = True) -> Fraction:
    return level_measure(f, lam, ">" if strict else ">=")


def joint_level_measure(conditions: Sequence[tuple]) -> Fraction:
    """Exact measure of the intersection of ``{f_k cmp_k lam_k}``.

    Each condition is ``(f, lam)`` (meaning ``>``) or ``(f, lam, cmp)``.
    """
    conds = [(c[0], c[1], c[2] if len(c) > 2 else ">") for c in conditions]
    if not conds:
        return Fraction(1)
    b, cols = align([c[0] for c in conds])
    masks = [_cond_mask(col, lam, cmp) for col, (_, lam, cmp) in zip(cols, conds)]
    total = Fraction(0)
    for ln, *ms in zip(atom_lengths(b), *masks):
        if all(ms):
            total += ln
    return total
