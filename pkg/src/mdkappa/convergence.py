"""Finite-scale checks of the convergence corollaries.

Everything here is finite-truncation evidence.  Series diagnostics bin the
terms dyadically and report how fast the bins decay; they never decide
convergence of an infinite series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import mpmath
import numpy as np

from .errors import ValidationError
from .pcf import align, atom_lengths
from .radical import RadScalar
from .systems import NonOverlapFamily, OrthoSystem

__all__ = [
    "WeylMultiplier",
    "SeriesDiag",
    "weyl_tail_diag",
    "series_diag",
    "lemma2_indices",
    "Lemma2Result",
    "coeff_preset",
    "BlockRow",
    "Corollary1Report",
    "corollary1_sim",
    "lemma3_compose",
    "Lemma3Report",
]

FINITE_NOTE = "finite-truncation evidence only; convergence of the infinite series is not decided"


class WeylMultiplier:
    """A positive nondecreasing weight omega(n), n >= 1, given by a vectorised
    formula or by a table ``values[n-1]``."""

    def __init__(self, name: str, fn: Callable | None = None, table: Sequence[float] | None = None):
        if (fn is None) == (table is None):
            raise ValidationError("give exactly one of fn or table")
        self.name = name
        self.fn = fn
        self.table = None if table is None else np.asarray(table, dtype=float)

    @property
    def limit(self) -> int | None:
        return None if self.table is None else len(self.table)

    def values(self, lo: int, hi: int) -> np.ndarray:
        """omega(n) for lo <= n <= hi."""
        if lo < 1 or hi < lo:
            raise ValidationError("bad range")
        if self.table is not None:
            if hi > len(self.table):
                raise ValidationError(f"table covers n <= {len(self.table)}")
            return self.table[lo - 1:hi]
        return np.asarray(self.fn(np.arange(lo, hi + 1, dtype=float)), dtype=float)

    def __call__(self, n: int) -> float:
        return float(self.values(n, n)[0])

    def check_monotone(self, lo: int, hi: int) -> None:
        v = self.values(lo, hi)
        if np.any(np.diff(v) < 0):
            i = int(np.argmax(np.diff(v) < 0))
            raise ValidationError(f"{self.name} decreases at n={lo + i}")

    def __mul__(self, other: "WeylMultiplier") -> "WeylMultiplier":
        a, b = self, other
        return WeylMultiplier(f"({a.name})*({b.name})", fn=lambda n: a.fn_or_table(n) * b.fn_or_table(n))

    def fn_or_table(self, n: np.ndarray) -> np.ndarray:
        if self.table is not None:
            return self.table[n.astype(int) - 1]
        return np.asarray(self.fn(n), dtype=float)

    @classmethod
    def preset(cls, name: str) -> "WeylMultiplier":
        table = {
            "one": lambda n: np.ones_like(n),
            "linear": lambda n: n,
            "log2": lambda n: np.log2(n),
            "log2p1": lambda n: np.log2(n + 1),
            "log2p1_sq": lambda n: np.log2(n + 1) ** 2,
            "log2p1_loglog": lambda n: np.log2(n + 1) * np.log2(np.log2(n + 1) + 1),
        }
        if name not in table:
            raise ValidationError(f"unknown preset {name!r}; choose from {sorted(table)}")
        return cls(name, fn=table[name])


# -- series diagnostics ------------------------------------------------------------


@dataclass
class SeriesDiag:
    partial_sums: list  # (N, sum_{start<=n<=N}) at powers of two and the end
    bins: list  # (t, sum over 2^t <= n < 2^{t+1}) for complete bins
    alpha: float | None  # fitted decay exponent, B_t ~ C t^-alpha
    verdict: str  # convergent-signature | divergent-signature | inconclusive
    tail_hint: float | None  # C T^{1-alpha} / (alpha - 1) when alpha > 1
    note: str = FINITE_NOTE


def series_diag(terms: np.ndarray, start: int) -> SeriesDiag:
    """Dyadic-bin diagnostic for ``sum_{n >= start} terms[n - start]``."""
    N = start + len(terms) - 1
    cs = np.cumsum(terms)
    partial = []
    p = 1
    while p <= N:
        if p >= start:
            partial.append((p, float(cs[p - start])))
        p *= 2
    if not partial or partial[-1][0] != N:
        partial.append((N, float(cs[-1])))
    bins = []
    t = max(1, math.ceil(math.log2(start)))
    while (1 << (t + 1)) - 1 <= N:
        lo, hi = 1 << t, (1 << (t + 1)) - 1
        bins.append((t, float(np.sum(terms[lo - start:hi - start + 1]))))
        t += 1
    alpha = tail = None
    verdict = "inconclusive"
    use = [(t, b) for t, b in bins if t >= 2 and b > 0]
    if len(use) >= 3:
        x = np.log([t for t, _ in use])
        y = np.log([b for _, b in use])
        slope, icpt = np.polyfit(x, y, 1)
        alpha = float(-slope)
        if alpha >= 1.5:
            verdict = "convergent-signature"
        elif alpha <= 1.1:
            verdict = "divergent-signature"
        if alpha > 1:
            T = use[-1][0]
            tail = float(math.exp(icpt) * T ** (1 - alpha) / (alpha - 1))
    return SeriesDiag(partial, bins, alpha, verdict, tail)


def weyl_tail_diag(omega: WeylMultiplier, N: int, start: int = 2) -> SeriesDiag:
    """Partial sums and dyadic bins of ``sum 1/(n omega(n))`` for start <= n <= N."""
    if N < 2 or start < 1 or start > N:
        raise ValidationError("need 1 <= start <= N and N >= 2")
    omega.check_monotone(start, N)
    w = omega.values(start, N)
    if np.any(w <= 0):
        raise ValidationError("omega must be positive on the range")
    n = np.arange(start, N + 1, dtype=float)
    return series_diag(1.0 / (n * w), start)


@dataclass
class Lemma2Result:
    indices: list
    bounded: bool  # omega stayed below K on the searched range
    limit: int


def lemma2_indices(omega: WeylMultiplier, K: int, limit: int | None = None) -> Lemma2Result:
    """Minimal n_k with omega(n_k) >= k for k = 1..K (binary search on the monotone weight)."""
    limit = limit or omega.limit or (1 << 40)
    if omega.limit is not None:
        limit = min(limit, omega.limit)
    out = []
    lo = 1
    for k in range(1, K + 1):
        if omega(limit) < k:
            return Lemma2Result(out, True, limit)
        a, b = lo, limit
        while a < b:
            mid = (a + b) // 2
            if omega(mid) >= k:
                b = mid
            else:
                a = mid + 1
        out.append(a)
        lo = a
    return Lemma2Result(out, False, limit)


# -- Corollary 1 block simulation ----------------------------------------------------


def coeff_preset(name: str, N: int) -> list[Fraction]:
    """Coefficient sequences a_1..a_N as exact binary fractions of their float values."""
    if name == "default":
        e = 1.1
    elif name == "boundary":
        e = 1.0
    elif name == "zero":
        return [Fraction(0)] * N
    else:
        raise ValidationError(f"unknown coefficient preset {name!r}")
    return [Fraction(j ** -0.5 * math.log2(j + 2) ** -e) for j in range(1, N + 1)]


@dataclass
class BlockRow:
    k: int
    norm_sq: RadScalar  # ||delta_k||_2^2
    budget_sq: object  # sum of a_j^2 over the block
    ratio: float | None  # ||delta_k|| / budget, the block's empirical kappa
    bound: float  # kappa bound used for the block
    ok: bool

    @property
    def norm(self) -> float:
        return math.sqrt(max(float(self.norm_sq), 0.0))


@dataclass
class Corollary1Report:
    rows: list
    lhs: RadScalar  # sum_k ||delta_k||^2
    rhs_lo: float  # rigorous lower end of sum_j a_j^2 log2 j
    rhs_hi: float
    chain_ok: bool
    blocks_ok: bool
    note: str = FINITE_NOTE

    @property
    def ok(self) -> bool:
        return self.chain_ok and self.blocks_ok

    def to_csv(self) -> str:
        from .serialize import rad_str

        lines = ["k,norm_sq,norm_sq_f,budget_sq,budget_sq_f,ratio,bound,ok"]
        for r in self.rows:
            ns = rad_str(r.norm_sq)
            lines.append(f"{r.k},{ns},{float(r.norm_sq)!r},{r.budget_sq},{float(r.budget_sq)!r},"
                         f"{'' if r.ratio is None else repr(r.ratio)},{r.bound!r},{int(r.ok)}")
        return "\n".join(lines) + "\n"


def _block_delta_sq(polys, coeffs) -> RadScalar:
    """``|| max_n |sum_{j<=n} a_j P_j| ||_2^2`` exactly, sums starting at the block."""
    live = [(c, p) for c, p in zip(coeffs, polys) if c]
    if not live:
        return RadScalar(0)
    b, cols = align([p for _, p in live])
    total = RadScalar(0)
    for a, ln in enumerate(atom_lengths(b)):
        acc = RadScalar(0)
        best = RadScalar(0)
        for (c, _), col in zip(live, cols):
            v = col[a]
            if v:
                acc = acc + c * v
                sq = acc * acc
                if sq > best:
                    best = sq
        total = total + best * ln
    return total


def corollary1_sim(a: Sequence, family: NonOverlapFamily | None, system: OrthoSystem, K: int,
                   kappa_bound: Callable[[int], float] | None = None) -> Corollary1Report:
    """Exact block maxima delta_k over the dyadic blocks (2^k, 2^{k+1}], k = 1..K.

    ``family`` defaults to the system itself (P_j = phi_j).  ``kappa_bound(n)``
    bounds the ratio for a block with n partial sums; the default is the frozen
    corpus bound ``K_T1 sqrt(log2(n+1))``.
    """
    from .kappa import T1_CORPUS_K

    top = 1 << (K + 1)
    a = [Fraction(x) if not isinstance(x, RadScalar) else x for x in a]
    if len(a) < top:
        raise ValidationError(f"need {top} coefficients for K={K}")
    if family is None:
        if len(system) < top:
            raise ValidationError(f"system has fewer than {top} functions")
        polys = system.functions[:top]
    else:
        if len(family) < top:
            raise ValidationError(f"family has fewer than {top} polynomials")
        if any(ns != 1 for ns in family.norms_sq()[:top]):
            raise ValidationError("family polynomials must be normalised")
        polys = family.polynomials(system)[:top]
    if kappa_bound is None:
        def kappa_bound(n):
            return T1_CORPUS_K * math.sqrt(math.log2(n + 1))
    rows = []
    lhs = RadScalar(0)
    for k in range(1, K + 1):
        lo, hi = 1 << k, 1 << (k + 1)
        block_a = a[lo:hi]  # j = lo+1 .. hi
        dsq = _block_delta_sq(polys[lo:hi], block_a)
        bsq = sum((x * x for x in block_a), Fraction(0))
        ratio = math.sqrt(float(dsq) / float(bsq)) if bsq else None
        bound = kappa_bound(hi - lo)
        # ||delta_k||^2 <= bound^2 * budget^2, compared with a float margin far above rounding
        ok = float(dsq) <= bound * bound * float(bsq) * (1 + 1e-12) + 1e-300
        rows.append(BlockRow(k, dsq, bsq, ratio, bound, ok))
        lhs = lhs + dsq
    with mpmath.workprec(200):
        rhs = mpmath.iv.mpf(0)
        ln2 = mpmath.iv.log(2)
        for j in range(2, top + 1):
            x = a[j - 1]
            x2 = x * x if isinstance(x, Fraction) else x.as_fraction() ** 2
            if x2:
                rhs += mpmath.iv.mpf(x2.numerator) / x2.denominator * mpmath.iv.log(j) / ln2
        rlo, rhi = float(rhs.a), float(rhs.b)
        llo, lhi = lhs.enclosure(1e-40)
        chain_ok = mpmath.mpf(lhi.numerator) / lhi.denominator < rhs.a
    return Corollary1Report(rows, lhs, rlo, rhi, bool(chain_ok), all(r.ok for r in rows))


# -- Lemma 3 composition -------------------------------------------------------------


@dataclass
class Lemma3Report:
    d3: SeriesDiag  # sum 1/(delta(k) k log2 k)
    omega_table: list  # (n, delta(n) * u(n)) at powers of two
    ratio_increasing: bool  # omega(n)/log2(n) nondecreasing for n >= 2
    omega_diag: SeriesDiag
    note: str = FINITE_NOTE


def lemma3_compose(u: WeylMultiplier, delta: WeylMultiplier, N: int) -> Lemma3Report:
    if N < 4:
        raise ValidationError("N >= 4")
    delta.check_monotone(2, N)
    n = np.arange(2, N + 1, dtype=float)
    dv = delta.values(2, N)
    if np.any(dv <= 0):
        raise ValidationError("delta must be positive")
    d3 = series_diag(1.0 / (dv * n * np.log2(n)), 2)
    om = dv * u.values(2, N)
    table = []
    p = 2
    while p <= N:
        table.append((p, float(om[p - 2])))
        p *= 2
    q = om / np.log2(n)
    inc = bool(np.all(np.diff(q) >= -1e-12 * np.abs(q[1:])))
    omega = WeylMultiplier(f"({delta.name})*({u.name})", table=np.concatenate([[om[0]], om]))
    try:
        od = weyl_tail_diag(omega, N)
    except ValidationError:
        od = series_diag(1.0 / (n * om), 2)
        od.verdict = "inconclusive"
    return Lemma3Report(d3, table, inc, od)
