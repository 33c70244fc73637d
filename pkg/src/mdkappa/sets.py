"""Half-open rational intervals and simple sets (finite unions of them) in [0, 1)."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .errors import ValidationError
from .radical import as_fraction

__all__ = ["Interval", "SimpleSet", "simple_set", "measure", "UNIT"]


@dataclass(frozen=True, order=True)
class Interval:
    """``[lo, hi)`` with ``0 <= lo < hi <= 1``."""

    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        lo, hi = as_fraction(self.lo), as_fraction(self.hi)
        if not (0 <= lo < hi <= 1):
            raise ValidationError(f"invalid interval [{lo}, {hi})")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo

    def __contains__(self, x) -> bool:
        return self.lo <= x < self.hi

    def __str__(self):
        return f"[{self.lo},{self.hi})"


def _canon(pairs: list[tuple[Fraction, Fraction]]) -> tuple[Interval, ...]:
    pairs = sorted(p for p in pairs if p[0] < p[1])
    out: list[list[Fraction]] = []
    for lo, hi in pairs:
        if out and lo <= out[-1][1]:
            if hi > out[-1][1]:
                out[-1][1] = hi
        else:
            out.append([lo, hi])
    return tuple(Interval(lo, hi) for lo, hi in out)


class SimpleSet:
    """Canonical finite union of half-open intervals: sorted, disjoint, non-adjacent."""

    __slots__ = ("intervals", "_hash")

    def __init__(self, intervals: Iterable = ()):
        pairs = []
        for iv in intervals:
            if isinstance(iv, Interval):
                pairs.append((iv.lo, iv.hi))
            else:
                lo, hi = iv
                iv = Interval(lo, hi)  # validates
                pairs.append((iv.lo, iv.hi))
        self.intervals: tuple[Interval, ...] = _canon(pairs)
        self._hash = None

    @classmethod
    def _from_pairs(cls, pairs) -> "SimpleSet":
        obj = cls.__new__(cls)
        obj.intervals = _canon([(as_fraction(a), as_fraction(b)) for a, b in pairs])
        obj._hash = None
        return obj

    @classmethod
    def unit(cls) -> "SimpleSet":
        return cls([(0, 1)])

    @classmethod
    def empty(cls) -> "SimpleSet":
        return cls()

    def pairs(self) -> list[tuple[Fraction, Fraction]]:
        return [(iv.lo, iv.hi) for iv in self.intervals]

    @property
    def measure(self) -> Fraction:
        return sum((iv.hi - iv.lo for iv in self.intervals), Fraction(0))

    def is_empty(self) -> bool:
        return not self.intervals

    def __contains__(self, x) -> bool:
        i = bisect_right([iv.lo for iv in self.intervals], x) - 1
        return i >= 0 and x < self.intervals[i].hi

    def union(self, other: "SimpleSet") -> "SimpleSet":
        return SimpleSet._from_pairs(self.pairs() + other.pairs())

    def intersection(self, other: "SimpleSet") -> "SimpleSet":
        out = []
        a, b = self.pairs(), other.pairs()
        i = j = 0
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo < hi:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return SimpleSet._from_pairs(out)

    def complement(self) -> "SimpleSet":
        out = []
        cur = Fraction(0)
        for lo, hi in self.pairs():
            if cur < lo:
                out.append((cur, lo))
            cur = hi
        if cur < 1:
            out.append((cur, Fraction(1)))
        return SimpleSet._from_pairs(out)

    def difference(self, other: "SimpleSet") -> "SimpleSet":
        return self.intersection(other.complement())

    __or__ = union
    __and__ = intersection
    __sub__ = difference

    def issubset(self, other: "SimpleSet") -> bool:
        return self.difference(other).is_empty()

    def __eq__(self, other):
        return isinstance(other, SimpleSet) and self.intervals == other.intervals

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.intervals)
        return self._hash

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __repr__(self):
        return "SimpleSet(" + ",".join(str(iv) for iv in self.intervals) + ")"


def simple_set(intervals) -> SimpleSet:
    """Canonicalize a list of intervals or ``(lo, hi)`` pairs."""
    return SimpleSet(intervals)


def measure(a: SimpleSet) -> Fraction:
    return a.measure


UNIT = SimpleSet.unit()
