"""Piecewise-affine measure-preserving maps of [0, 1) and their action on functions.

Every map here is a finite list of affine pieces ``x -> slope * x + offset``
on half-open rational source intervals.  The normalising map of a simple
set, ``xi_a``, is a *partial* map (domain ``a``, onto ``[0, 1)``); it only
appears as an ingredient of :func:`u_map`.  Everything else is total.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import DomainError, ValidationError
from .pcf import PCF, integrate, inner
from .radical import RadScalar, as_fraction
from .sets import Interval, SimpleSet, UNIT

__all__ = [
    "Piece",
    "PwAffineMap",
    "Partition",
    "identity_map",
    "xi_map",
    "xi_inverse",
    "eta_map",
    "u_map",
    "u_partition_map",
    "compose",
    "pullback",
    "check_measure_preserving",
    "MPReport",
    "dyadic_probes",
    "correlation_limit",
    "CorrelationTable",
]


@dataclass(frozen=True)
class Piece:
    lo: Fraction
    hi: Fraction
    slope: Fraction
    offset: Fraction

    @property
    def img_lo(self) -> Fraction:
        return self.slope * self.lo + self.offset

    @property
    def img_hi(self) -> Fraction:
        return self.slope * self.hi + self.offset

    def inv(self, y: Fraction) -> Fraction:
        return (y - self.offset) / self.slope


def _merge(pieces: list[Piece]) -> list[Piece]:
    out: list[Piece] = []
    for p in pieces:
        if out:
            q = out[-1]
            if q.hi == p.lo and q.slope == p.slope and q.offset == p.offset:
                out[-1] = Piece(q.lo, p.hi, q.slope, q.offset)
                continue
        out.append(p)
    return out


class PwAffineMap:
    """Finitely-many-to-one piecewise-affine map with positive slopes."""

    __slots__ = ("pieces", "domain", "_los")

    def __init__(self, pieces: Iterable, *, validate: bool = True):
        ps = []
        for p in pieces:
            if not isinstance(p, Piece):
                lo, hi, s, b = p
                p = Piece(as_fraction(lo), as_fraction(hi), as_fraction(s), as_fraction(b))
            ps.append(p)
        ps.sort(key=lambda p: p.lo)
        if validate:
            prev = Fraction(0)
            for i, p in enumerate(ps):
                if not (0 <= p.lo < p.hi <= 1) or p.slope <= 0:
                    raise ValidationError(f"bad piece {p}")
                if i and p.lo < prev:
                    raise ValidationError("piece sources overlap")
                if p.img_lo < 0 or p.img_hi > 1:
                    raise ValidationError(f"piece image [{p.img_lo},{p.img_hi}) leaves [0,1)")
                prev = p.hi
        self.pieces: tuple[Piece, ...] = tuple(_merge(ps))
        self.domain = SimpleSet._from_pairs([(p.lo, p.hi) for p in self.pieces])
        self._los = [p.lo for p in self.pieces]

    @property
    def is_total(self) -> bool:
        return self.domain == UNIT

    def __len__(self):
        return len(self.pieces)

    def _piece_at(self, x: Fraction) -> Piece:
        i = bisect_right(self._los, x) - 1
        if i < 0 or not x < self.pieces[i].hi:
            raise DomainError(f"{x} outside the map's domain")
        return self.pieces[i]

    def __call__(self, x) -> Fraction:
        x = as_fraction(x)
        p = self._piece_at(x)
        return p.slope * x + p.offset

    def __eq__(self, other):
        return isinstance(other, PwAffineMap) and self.pieces == other.pieces

    def __hash__(self):
        return hash(self.pieces)

    def __repr__(self):
        return f"PwAffineMap({len(self.pieces)} pieces)"

    def restrict(self, a: SimpleSet) -> "PwAffineMap":
        out = []
        for iv in a:
            i = max(bisect_right(self._los, iv.lo) - 1, 0)
            while i < len(self.pieces) and self.pieces[i].lo < iv.hi:
                p = self.pieces[i]
                lo, hi = max(p.lo, iv.lo), min(p.hi, iv.hi)
                if lo < hi:
                    out.append(Piece(lo, hi, p.slope, p.offset))
                i += 1
        return PwAffineMap(out, validate=False)

    def image(self, a: SimpleSet | None = None) -> SimpleSet:
        m = self if a is None else self.restrict(a)
        return SimpleSet._from_pairs([(p.img_lo, p.img_hi) for p in m.pieces])

    def preimage(self, b: SimpleSet) -> SimpleSet:
        out = []
        for p in self.pieces:
            ilo, ihi = p.img_lo, p.img_hi
            for iv in b:
                lo, hi = max(ilo, iv.lo), min(ihi, iv.hi)
                if lo < hi:
                    out.append((p.inv(lo), p.inv(hi)))
        return SimpleSet._from_pairs(out)

    def preimage_cdf(self, points: Sequence[Fraction]) -> dict[Fraction, Fraction]:
        """``y -> |tau^{-1}([0, y))|`` at the given points by a single sweep."""
        events: dict[Fraction, Fraction] = {}
        for p in self.pieces:
            r = 1 / p.slope
            events[p.img_lo] = events.get(p.img_lo, 0) + r
            events[p.img_hi] = events.get(p.img_hi, 0) - r
        ev = sorted(events.items())
        out = {}
        val = Fraction(0)
        rate = Fraction(0)
        pos = Fraction(0)
        k = 0
        for y in sorted(set(points)):
            while k < len(ev) and ev[k][0] <= y:
                t, dr = ev[k]
                val += rate * (t - pos)
                pos = t
                rate += dr
                k += 1
            val += rate * (y - pos)
            pos = y
            out[y] = val
        return out

    def to_json(self) -> dict:
        return {
            "pieces": [
                [str(p.lo), str(p.hi), str(p.slope), str(p.offset)] for p in self.pieces
            ]
        }

    @classmethod
    def from_json(cls, d: dict) -> "PwAffineMap":
        return cls([tuple(Fraction(x) for x in row) for row in d["pieces"]])


def _glue(maps: Sequence[PwAffineMap]) -> PwAffineMap:
    return PwAffineMap([p for m in maps for p in m.pieces])


def identity_map() -> PwAffineMap:
    return PwAffineMap([(0, 1, 1, 0)])


def xi_map(a: SimpleSet) -> PwAffineMap:
    """``x -> |[0, x) & a| / |a|`` on ``a`` (partial map onto [0, 1))."""
    mu = a.measure
    if mu == 0:
        raise DomainError("xi_map needs a set of positive measure")
    out = []
    cum = Fraction(0)
    for iv in a:
        out.append(Piece(iv.lo, iv.hi, 1 / mu, (cum - iv.lo) / mu))
        cum += iv.length
    return PwAffineMap(out)


def xi_inverse(a: SimpleSet) -> PwAffineMap:
    """Total map [0, 1) -> a inverting :func:`xi_map`."""
    mu = a.measure
    if mu == 0:
        raise DomainError("xi_inverse needs a set of positive measure")
    out = []
    cum = Fraction(0)
    for iv in a:
        out.append(Piece(cum / mu, (cum + iv.length) / mu, mu, iv.lo - cum))
        cum += iv.length
    return PwAffineMap(out)


def eta_map(n: int) -> PwAffineMap:
    """``x -> {n x}``."""
    if not isinstance(n, int) or n < 1:
        raise DomainError(f"eta_map needs a positive integer, got {n!r}")
    return PwAffineMap([(Fraction(k, n), Fraction(k + 1, n), n, -k) for k in range(n)])


def compose(outer: PwAffineMap, inner: PwAffineMap) -> PwAffineMap:
    """``outer o inner``; the image of ``inner`` must lie in the domain of ``outer``."""
    los = outer._los
    out = []
    for p in inner.pieces:
        a, b = p.img_lo, p.img_hi
        i = bisect_right(los, a) - 1
        cur = a
        while cur < b:
            if i < 0 or i >= len(outer.pieces):
                raise ValidationError(f"inner image point {cur} outside outer domain")
            q = outer.pieces[i]
            if not (q.lo <= cur < q.hi):
                raise ValidationError(f"inner image point {cur} outside outer domain")
            hi = min(b, q.hi)
            out.append(
                Piece(p.inv(cur), p.inv(hi), p.slope * q.slope, q.slope * p.offset + q.offset)
            )
            cur = hi
            i += 1
    return PwAffineMap(out, validate=False)


def u_map(a: SimpleSet, n: int) -> PwAffineMap:
    """``xi_a^{-1} o eta_n o xi_a`` on ``a`` and the identity elsewhere."""
    inside = compose(xi_inverse(a), compose(eta_map(n), xi_map(a)))
    rest = a.complement()
    parts = [inside]
    if not rest.is_empty():
        parts.append(identity_map().restrict(rest))
    return _glue(parts)


class Partition:
    """Finite partition of [0, 1) into nonempty simple sets."""

    __slots__ = ("blocks",)

    def __init__(self, blocks: Iterable[SimpleSet]):
        blocks = [b if isinstance(b, SimpleSet) else SimpleSet(b) for b in blocks]
        pairs = []
        for b in blocks:
            if b.measure == 0:
                raise ValidationError("partition blocks must have positive measure")
            pairs.extend(b.pairs())
        pairs.sort()
        cur = Fraction(0)
        for lo, hi in pairs:
            if lo != cur:
                raise ValidationError("blocks overlap or leave a gap")
            cur = hi
        if cur != 1:
            raise ValidationError("blocks do not cover [0, 1)")
        self.blocks: tuple[SimpleSet, ...] = tuple(blocks)

    @classmethod
    def trivial(cls) -> "Partition":
        return cls([UNIT])

    @classmethod
    def from_points(cls, points: Sequence) -> "Partition":
        """Interval partition with the given interior cut points."""
        pts = [Fraction(0)] + sorted(as_fraction(p) for p in points) + [Fraction(1)]
        return cls([SimpleSet([(lo, hi)]) for lo, hi in zip(pts, pts[1:])])

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __eq__(self, other):
        return isinstance(other, Partition) and set(self.blocks) == set(other.blocks)

    def __hash__(self):
        return hash(frozenset(self.blocks))

    def is_interval_partition(self) -> bool:
        return all(len(b) == 1 for b in self.blocks)

    def block_index(self, x) -> int:
        """Index of the block containing the point ``x``."""
        table = self._table()
        i = bisect_right(table[0], as_fraction(x)) - 1
        return table[1][i]

    def _table(self):
        rows = sorted((iv.lo, k) for k, b in enumerate(self.blocks) for iv in b)
        return [r[0] for r in rows], [r[1] for r in rows]

    def refines(self, other: "Partition") -> bool:
        """Every block of self lies inside a block of ``other``."""
        los, ids = other._table()
        for b in self.blocks:
            k = ids[bisect_right(los, b.intervals[0].lo) - 1]
            if not b.issubset(other.blocks[k]):
                return False
        return True

    def __repr__(self):
        return f"Partition({list(self.blocks)})"


def u_partition_map(A: Partition, n: int) -> PwAffineMap:
    """The block-wise map equal to ``u_{a_j, n}`` on each block ``a_j``."""
    if not isinstance(A, Partition):
        A = Partition(A)
    if n == 1:
        return identity_map()
    parts = [compose(xi_inverse(a), compose(eta_map(n), xi_map(a))) for a in A.blocks]
    return _glue(parts)


def pullback(f: PCF, tau: PwAffineMap) -> PCF:
    """``f o tau`` as an exact PCF."""
    if not tau.is_total:
        raise DomainError("pullback needs a total map")
    fb, fv = f.breaks, f.values
    xs: list[Fraction] = []
    vs: list[RadScalar] = []
    for p in tau.pieces:
        a, b = p.img_lo, p.img_hi
        i = bisect_right(fb, a) - 1
        xs.append(p.lo)
        vs.append(fv[i])
        i += 1
        while i < len(fb) and fb[i] < b:
            xs.append(p.inv(fb[i]))
            vs.append(fv[i])
            i += 1
    return PCF.from_atoms(xs, vs)


def dyadic_probes(resolution: int) -> list[SimpleSet]:
    """All dyadic intervals ``[k 2^-j, (k+1) 2^-j)`` with ``0 <= j <= resolution``."""
    out = []
    for j in range(resolution + 1):
        d = 1 << j
        out.extend(SimpleSet._from_pairs([(Fraction(k, d), Fraction(k + 1, d))]) for k in range(d))
    return out


@dataclass
class MPReport:
    checked: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_measure_preserving(tau: PwAffineMap, probes: Sequence[SimpleSet]) -> MPReport:
    """Compare ``|tau^{-1}(J)|`` with ``|J|`` exactly for every probe ``J``."""
    report = MPReport()
    if not tau.is_total:
        report.violations.append({"reason": "map is not total", "domain": tau.domain})
        return report
    points = [x for J in probes for iv in J for x in (iv.lo, iv.hi)]
    cdf = tau.preimage_cdf(points)
    for J in probes:
        got = sum((cdf[iv.hi] - cdf[iv.lo] for iv in J), Fraction(0))
        report.checked += 1
        if got != J.measure:
            report.violations.append({"probe": J, "preimage_measure": got, "measure": J.measure})
    return report


@dataclass
class CorrelationTable:
    rows: list  # (n, value, target, gap)
    target: RadScalar

    @property
    def exact_from(self):
        """Smallest n in the table from which every later gap is exactly 0."""
        out = None
        for n, _, _, gap in reversed(self.rows):
            if gap:
                break
            out = n
        return out


def correlation_limit(f: PCF, g: PCF, A: Partition, n_list: Sequence[int]) -> CorrelationTable:
    """``int f(u_{A,n}(x)) g(x) dx`` against its block-averaged limit.

    The limit used is ``sum_j (1/|a_j|) int_{a_j} f * int_{a_j} g``, which is what
    the change of variables on each block gives.
    """
    if not isinstance(A, Partition):
        A = Partition(A)
    target = RadScalar(0)
    for a in A.blocks:
        target = target + integrate(f, a) * integrate(g, a) / a.measure
    rows = []
    for n in n_list:
        val = inner(pullback(f, u_partition_map(A, n)), g)
        rows.append((n, val, target, val - target))
    return CorrelationTable(rows, target)
