"""Exact scalars of the form ``sum_i r_i * sqrt(q_i)``.

``r_i`` are rationals and ``q_i`` distinct square-free positive integers
(``q = 1`` is the rational part).  Square roots of distinct square-free
integers are linearly independent over Q, so the canonical form is zero
exactly when no terms remain.  That makes equality trivial and guarantees
that sign determination on a nonzero value always terminates in principle.

Sign determination runs in three stages:

1. a float evaluation with a rigorous rounding bound,
2. integer interval refinement doubling the precision up to a budget,
3. a symbolic descent through the multi-quadratic field tower.

Stage 3 can be switched off; the value is then reported undecidable with
:class:`PrecisionError` instead of being rounded.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational

from .errors import PrecisionError

__all__ = [
    "RadScalar",
    "PrecisionConfig",
    "precision",
    "get_precision",
    "as_fraction",
    "squarefree_split",
]

_U = 2.0 ** -53


@dataclass(frozen=True)
class PrecisionConfig:
    bits: int = 256
    symbolic: bool = True


_PRECISION = contextvars.ContextVar("mdkappa_precision", default=PrecisionConfig())


def get_precision() -> PrecisionConfig:
    return _PRECISION.get()


@contextlib.contextmanager
def precision(bits: int | None = None, symbolic: bool | None = None):
    """Temporarily change the sign-determination budget."""
    cur = _PRECISION.get()
    new = PrecisionConfig(
        bits=cur.bits if bits is None else int(bits),
        symbolic=cur.symbolic if symbolic is None else bool(symbolic),
    )
    token = _PRECISION.set(new)
    try:
        yield new
    finally:
        _PRECISION.reset(token)


def set_default_precision(bits: int, symbolic: bool = True) -> None:
    _PRECISION.set(PrecisionConfig(bits=int(bits), symbolic=bool(symbolic)))


def as_fraction(x) -> Fraction:
    """Coerce ints, Fractions, exact floats and ``"p/q"`` strings."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite value {x!r}")
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot interpret {x!r} as a rational")


@lru_cache(maxsize=65536)
def squarefree_split(n: int) -> tuple[int, int]:
    """Return ``(s, k)`` with ``n = s**2 * k`` and ``k`` square-free."""
    if n <= 0:
        raise ValueError("squarefree_split needs a positive integer")
    s, k = 1, 1
    r = n
    p = 2
    while p * p * p <= r:
        if r % p == 0:
            e = 0
            while r % p == 0:
                r //= p
                e += 1
            s *= p ** (e // 2)
            if e % 2:
                k *= p
        p += 1 if p == 2 else 2
    # r now has at most two prime factors
    if r > 1:
        t = math.isqrt(r)
        if t * t == r:
            s *= t
        else:
            k *= r
    return s, k


@lru_cache(maxsize=4096)
def _largest_prime_factor(k: int) -> int:
    best, r, p = 1, k, 2
    while p * p <= r:
        while r % p == 0:
            best, r = p, r // p
        p += 1 if p == 2 else 2
    return max(best, r)


@lru_cache(maxsize=4096)
def _sqrt_float(k: int) -> float:
    return math.sqrt(k)


def _frac_float(x: Fraction) -> float:
    try:
        return float(x)
    except OverflowError:
        return math.copysign(math.inf, x)


class RadScalar:
    """Immutable exact element of Q(sqrt(2), sqrt(3), sqrt(5), ...)."""

    __slots__ = ("_t", "_hash")

    def __init__(self, value=0):
        if isinstance(value, RadScalar):
            self._t = value._t
        else:
            v = as_fraction(value)
            self._t = {1: v} if v else {}
        self._hash = None

    @classmethod
    def _raw(cls, terms: dict) -> "RadScalar":
        obj = cls.__new__(cls)
        obj._t = terms
        obj._hash = None
        return obj

    @classmethod
    def sqrt_of(cls, q) -> "RadScalar":
        """Exact ``sqrt(q)`` for a nonnegative rational ``q``."""
        q = as_fraction(q)
        if q < 0:
            raise ValueError("square root of a negative rational")
        if q == 0:
            return cls._raw({})
        # sqrt(a/b) = sqrt(a*b)/b
        s, k = squarefree_split(q.numerator * q.denominator)
        return cls._raw({k: Fraction(s, q.denominator)})

    @classmethod
    def from_terms(cls, pairs) -> "RadScalar":
        """Build ``sum r * sqrt(q)`` from ``(r, q)`` pairs, any positive rational q."""
        out: dict = {}
        for r, q in pairs:
            r = as_fraction(r)
            if not r:
                continue
            root = cls.sqrt_of(q)
            for k, c in root._t.items():
                v = out.get(k, 0) + r * c
                if v:
                    out[k] = v
                else:
                    out.pop(k, None)
        return cls._raw(out)

    # -- structure -----------------------------------------------------

    def terms(self) -> list[tuple[Fraction, int]]:
        """Canonical ``(r, q)`` pairs sorted by ``q``."""
        return [(self._t[k], k) for k in sorted(self._t)]

    @property
    def keys(self) -> frozenset:
        return frozenset(self._t)

    def is_zero(self) -> bool:
        return not self._t

    def is_rational(self) -> bool:
        return not self._t or (len(self._t) == 1 and 1 in self._t)

    def as_fraction(self) -> Fraction:
        if not self.is_rational():
            raise ValueError(f"{self} is irrational")
        return self._t.get(1, Fraction(0))

    # -- arithmetic ----------------------------------------------------

    @staticmethod
    def _coerce(other):
        if isinstance(other, RadScalar):
            return other
        if isinstance(other, (int, Fraction, Rational, float, str)):
            return RadScalar(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if not other._t:
            return self
        if not self._t:
            return other
        out = dict(self._t)
        for k, c in other._t.items():
            v = out.get(k)
            if v is None:
                out[k] = c
            else:
                v = v + c
                if v:
                    out[k] = v
                else:
                    del out[k]
        return RadScalar._raw(out)

    __radd__ = __add__

    def __neg__(self):
        return RadScalar._raw({k: -c for k, c in self._t.items()})

    def __pos__(self):
        return self

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            if not other:
                return RadScalar._raw({})
            return RadScalar._raw({k: c * other for k, c in self._t.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if not self._t or not other._t:
            return RadScalar._raw({})
        if len(other._t) == 1 and 1 in other._t:
            f = other._t[1]
            return RadScalar._raw({k: c * f for k, c in self._t.items()})
        if len(self._t) == 1 and 1 in self._t:
            f = self._t[1]
            return RadScalar._raw({k: c * f for k, c in other._t.items()})
        out: dict = {}
        for k1, c1 in self._t.items():
            for k2, c2 in other._t.items():
                if k1 == k2:
                    k, c = 1, c1 * c2 * k1
                else:
                    g = math.gcd(k1, k2)
                    k, c = (k1 // g) * (k2 // g), c1 * c2 * g
                v = out.get(k, 0) + c
                if v:
                    out[k] = v
                else:
                    out.pop(k, None)
        return RadScalar._raw(out)

    __rmul__ = __mul__

    def _split(self, p: int):
        """Write self = A + sqrt(p) * B with A, B free of the prime p."""
        a, b = {}, {}
        for k, c in self._t.items():
            if k % p == 0:
                b[k // p] = c
            else:
                a[k] = c
        return RadScalar._raw(a), RadScalar._raw(b)

    def _max_prime(self) -> int:
        return max(_largest_prime_factor(k) for k in self._t)

    def inverse(self) -> "RadScalar":
        if not self._t:
            raise ZeroDivisionError("inverse of zero")
        if self.is_rational():
            return RadScalar._raw({1: 1 / self._t[1]})
        p = self._max_prime()
        a, b = self._split(p)
        # 1/(A + sqrt(p) B) = (A - sqrt(p) B) / (A^2 - p B^2)
        conj = a - b * RadScalar._raw({p: Fraction(1)})
        norm = a * a - b * b * p
        return conj * norm.inverse()

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            if not other:
                raise ZeroDivisionError("division by zero")
            return RadScalar._raw({k: c / other for k, c in self._t.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self * other.inverse()

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other * self.inverse()

    def __pow__(self, e: int):
        if not isinstance(e, int) or e < 0:
            return NotImplemented
        out = RadScalar(1)
        base = self
        while e:
            if e & 1:
                out = out * base
            base = base * base
            e >>= 1
        return out

    def sqrt(self) -> "RadScalar":
        """Square root; only defined here when the value is a nonnegative rational."""
        if not self.is_rational():
            raise ValueError(f"sqrt of irrational {self} is outside the field")
        return RadScalar.sqrt_of(self.as_fraction())

    def __abs__(self):
        return -self if self.sign() < 0 else self

    # -- ordering ------------------------------------------------------

    def sign(self) -> int:
        t = self._t
        if not t:
            return 0
        if len(t) == 1:
            (k, c), = t.items()
            return 1 if c > 0 else -1
        # stage 1: float with a rounding bound
        s = 0.0
        mag = 0.0
        for k, c in t.items():
            v = _frac_float(c) * _sqrt_float(k)
            s += v
            mag += abs(v)
        if math.isfinite(mag):
            bound = 2.0 * (len(t) + 4) * _U * mag + 1e-300
            if s > bound:
                return 1
            if s < -bound:
                return -1
        cfg = _PRECISION.get()
        # stage 2: rigorous integer intervals
        bits = 64
        while bits <= cfg.bits:
            lo, hi = self.bounds(bits)
            if lo > 0:
                return 1
            if hi < 0:
                return -1
            if bits == cfg.bits:
                break
            bits = min(2 * bits, cfg.bits)
        # stage 3: exact descent through the field tower
        if not cfg.symbolic:
            raise PrecisionError(
                f"sign of {self} undecidable at {cfg.bits} bits (symbolic fallback disabled)"
            )
        return self._symbolic_sign()

    def _symbolic_sign(self) -> int:
        if not self._t:
            return 0
        if self.is_rational():
            return 1 if self._t[1] > 0 else -1
        p = self._max_prime()
        a, b = self._split(p)
        sa, sb = a._symbolic_sign(), b._symbolic_sign()
        if sb == 0:
            return sa
        if sa == 0 or sa == sb:
            return sb if sa == 0 else sa
        # opposite signs: compare A^2 with p B^2
        return sa * (a * a - b * b * p)._symbolic_sign()

    def bounds(self, bits: int) -> tuple[Fraction, Fraction]:
        """Rigorous enclosure ``[lo, hi]`` using ``bits`` fractional bits for each root."""
        den = 1 << bits
        lo = Fraction(0)
        hi = Fraction(0)
        for k, c in self._t.items():
            if k == 1:
                lo += c
                hi += c
                continue
            s = math.isqrt(k << (2 * bits))
            a, b = Fraction(s, den), Fraction(s + 1, den)
            if c > 0:
                lo += c * a
                hi += c * b
            else:
                lo += c * b
                hi += c * a
        return lo, hi

    def _cmp(self, other) -> int:
        other = self._coerce(other)
        if other is NotImplemented:
            raise TypeError
        return (self - other).sign()

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __eq__(self, other):
        if isinstance(other, RadScalar):
            return self._t == other._t
        if isinstance(other, (int, Fraction)):
            if not other:
                return not self._t
            return len(self._t) == 1 and self._t.get(1) == other
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            if self.is_rational():
                self._hash = hash(self._t.get(1, 0))
            else:
                self._hash = hash(frozenset(self._t.items()))
        return self._hash

    def __bool__(self):
        return bool(self._t)

    # -- conversion ----------------------------------------------------

    def __float__(self):
        t = self._t
        if not t:
            return 0.0
        if len(t) == 1:
            (k, c), = t.items()
            return _frac_float(c) * _sqrt_float(k) if k != 1 else _frac_float(c)
        s = 0.0
        mag = 0.0
        for k, c in t.items():
            v = _frac_float(c) * _sqrt_float(k)
            s += v
            mag += abs(v)
        if abs(s) > 1e-6 * mag:
            return s
        # heavy cancellation: refine until the enclosure pins a double
        bits = 128
        while True:
            lo, hi = self.bounds(bits)
            mid = (lo + hi) / 2
            if hi - lo <= abs(mid) * Fraction(1, 1 << 60) or bits >= 4096:
                return float(mid)
            bits *= 2

    def enclosure(self, rel: float = 1e-30) -> tuple[Fraction, Fraction]:
        """Enclosure whose width is at most ``rel`` times the magnitude (nonzero values)."""
        if self.is_rational():
            v = self.as_fraction()
            return v, v
        target = Fraction(rel)
        bits = 96
        while True:
            lo, hi = self.bounds(bits)
            mid = abs(lo + hi) / 2
            if hi - lo <= target * mid or bits >= 8192:
                return lo, hi
            bits *= 2

    def __repr__(self):
        return f"RadScalar({self})"

    def __str__(self):
        if not self._t:
            return "0"
        parts = []
        for c, k in self.terms():
            parts.append(_term_str(c, k))
        return " + ".join(parts)


def _term_str(c: Fraction, k: int) -> str:
    if k == 1:
        return str(c)
    if abs(c) == 1:
        return f"{'-' if c < 0 else ''}sqrt({k})"
    return f"{c}*sqrt({k})"


ZERO = RadScalar(0)
ONE = RadScalar(1)


def rad(x) -> RadScalar:
    return x if isinstance(x, RadScalar) else RadScalar(x)
