"""Maximal operator, square function, maximal partial sums and good-lambda scans.

Exact routines return PCFs with radical values.  Anything that has to run
inside an optimiser goes through :class:`FloatGrid`, which evaluates a set
of basis functions on the exact common refinement of their breakpoints, so
the only floating-point error is the arithmetic itself.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .pcf import PCF, _sqrt_enclosure, align, atom_lengths, integrate
from .radical import RadScalar, as_fraction, rad
from .systems import OrthoSystem

__all__ = [
    "MonotoneFamily",
    "Certified",
    "FloatGrid",
    "maximal_fn",
    "square_fn",
    "pstar",
    "kappa_ratio",
    "GoodLambdaRow",
    "GoodLambdaTable",
    "good_lambda_scan",
    "CWWFit",
    "cww_exponent_fit",
    "cww_eps",
    "mr_ratio_check",
    "MRReport",
    "random_polynomial",
]


def _exact_coeff(c) -> RadScalar:
    if isinstance(c, RadScalar):
        return c
    if isinstance(c, (float, np.floating)):
        return RadScalar(Fraction(float(c)))
    return rad(c)


class MonotoneFamily:
    """Nested index sets ``G_1 <= ... <= G_n`` of a system with coefficients on ``G_n``.

    Stored as an ordered index list plus prefix sizes: ``G_m = order[:sizes[m-1]]``.
    """

    def __init__(self, system: OrthoSystem, groups: Sequence[Iterable[int]], coeffs):
        groups = [list(g) for g in groups]
        if not groups:
            raise ValidationError("a family needs at least one polynomial")
        order: list[int] = []
        sizes: list[int] = []
        prev: set = set()
        for g in groups:
            gs = set(g)
            if not prev <= gs:
                raise ValidationError("index sets are not nested")
            order.extend(sorted(gs - prev))
            sizes.append(len(order))
            prev = gs
        self._init(system, order, sizes, coeffs)

    @classmethod
    def from_structure(cls, system, order: Sequence[int], sizes: Sequence[int], coeffs) -> "MonotoneFamily":
        obj = cls.__new__(cls)
        obj._init(system, list(order), list(sizes), coeffs)
        return obj

    def _init(self, system, order, sizes, coeffs):
        if len(set(order)) != len(order):
            raise ValidationError("repeated index in structure")
        if any(b < a for a, b in zip(sizes, sizes[1:])) or not sizes or sizes[-1] != len(order):
            raise ValidationError("sizes must be nondecreasing and end at len(order)")
        for j in order:
            if not 1 <= j <= len(system):
                raise ValidationError(f"index {j} outside the system")
        if not isinstance(coeffs, dict):
            coeffs = dict(zip(order, coeffs))
        missing = [j for j in order if j not in coeffs]
        if missing:
            raise ValidationError(f"missing coefficients for {missing}")
        self.system = system
        self.order = tuple(order)
        self.sizes = tuple(sizes)
        self.coeffs = {j: coeffs[j] for j in order}
        if all(float(self.coeffs[j]) == 0 and _exact_coeff(self.coeffs[j]).is_zero() for j in order):
            raise DomainError("sum of squared coefficients is zero")

    @property
    def n(self) -> int:
        return len(self.sizes)

    def groups(self) -> list[tuple[int, ...]]:
        return [self.order[:s] for s in self.sizes]

    def scaled(self, lam) -> "MonotoneFamily":
        return MonotoneFamily.from_structure(
            self.system, self.order, self.sizes, {j: c * lam for j, c in self.coeffs.items()}
        )

    def snapshot_table(self):
        """Exact values of ``p_1..p_n`` on the common atoms: (breaks, rows[atom][m])."""
        fs = [self.system[j] for j in self.order]
        cs = [_exact_coeff(self.coeffs[j]) for j in self.order]
        b, cols = align(fs)
        rows = []
        zero = RadScalar(0)
        for a in range(len(b)):
            acc = zero
            partial = []
            for c, col in zip(cs, cols):
                v = col[a]
                if v and c:
                    acc = acc + c * v
                partial.append(acc)
            rows.append([partial[s - 1] if s else zero for s in self.sizes])
        return b, rows

    def polynomials(self) -> list[PCF]:
        b, rows = self.snapshot_table()
        return [PCF.from_atoms(b, [r[m] for r in rows]) for m in range(self.n)]


# -- exact operators -----------------------------------------------------------


def _coeff_items(coeffs) -> list[tuple[int, RadScalar]]:
    if not isinstance(coeffs, dict):
        coeffs = {k + 1: c for k, c in enumerate(coeffs)}
    return [(k, _exact_coeff(coeffs[k])) for k in sorted(coeffs) if _exact_coeff(coeffs[k])]


def maximal_fn(coeffs, system: OrthoSystem) -> PCF:
    """``sup_n |sum_{k<=n} a_k phi_k|`` in the system's index order (exact)."""
    items = _coeff_items(coeffs)
    if not items:
        return PCF.zero()
    b, cols = align([system[k] for k, _ in items])
    out = []
    for a in range(len(b)):
        acc = RadScalar(0)
        best = RadScalar(0)
        for (k, c), col in zip(items, cols):
            v = col[a]
            if v:
                acc = acc + c * v
                av = abs(acc)
                if av > best:
                    best = av
        out.append(best)
    return PCF.from_atoms(b, out)


def square_fn(coeffs, system: OrthoSystem) -> PCF:
    """``(sum a_k^2 phi_k^2)^{1/2}``; the sum must be rational pointwise."""
    items = _coeff_items(coeffs)
    if not items:
        return PCF.zero()
    b, cols = align([system[k] for k, _ in items])
    out = []
    for a in range(len(b)):
        acc = RadScalar(0)
        for (k, c), col in zip(items, cols):
            v = col[a]
            if v:
                acc = acc + c * c * v * v
        if not acc.is_rational():
            raise ValidationError("square function value is not a rational square; use rational coefficients")
        out.append(acc.sqrt())
    return PCF.from_atoms(b, out)


def pstar(family: MonotoneFamily) -> PCF:
    """``max_m |p_m|`` over the family's snapshots only."""
    b, rows = family.snapshot_table()
    out = []
    for r in rows:
        best = RadScalar(0)
        for v in r:
            av = abs(v)
            if av > best:
                best = av
        out.append(best)
    return PCF.from_atoms(b, out)


# -- float evaluation ------------------------------------------------------------


class FloatGrid:
    """Basis functions sampled exactly on their common atoms, as float arrays.

    ``V[a, i]`` is the value of ``system[indices[i]]`` on atom ``a`` and ``w[a]``
    the atom length.
    """

    def __init__(self, system: OrthoSystem, indices: Sequence[int]):
        self.indices = tuple(indices)
        fs = [system[j] for j in self.indices]
        allb = set()
        for f in fs:
            allb.update(f.breaks)
        breaks = sorted(allb)
        self.breaks = breaks
        ends = breaks[1:] + [Fraction(1)]
        self.w = np.array([float(hi - lo) for lo, hi in zip(breaks, ends)])
        V = np.zeros((len(breaks), len(fs)))
        cache: dict = {}
        for i, f in enumerate(fs):
            fends = f.ends()
            for lo, hi, v in zip(f.breaks, fends, f.values):
                if not v:
                    continue
                fv = cache.get(v)
                if fv is None:
                    fv = cache[v] = float(v)
                a0 = bisect_left(breaks, lo)
                a1 = bisect_left(breaks, hi) if hi < 1 else len(breaks)
                V[a0:a1, i] = fv
        self.V = V

    @classmethod
    def cached(cls, system: OrthoSystem, indices: Sequence[int]) -> "FloatGrid":
        store = system.meta.setdefault("_grids", {})
        key = tuple(sorted(indices))
        g = store.get(key)
        if g is None:
            g = store[key] = cls(system, key)
        return g

    def columns(self, order: Sequence[int]) -> np.ndarray:
        pos = {j: i for i, j in enumerate(self.indices)}
        return self.V[:, [pos[j] for j in order]]


def _float_ratio(Vo: np.ndarray, w: np.ndarray, sizes: Sequence[int], c: np.ndarray):
    """Ratio and a rounding bound for coefficients ``c`` on ordered columns ``Vo``."""
    terms = Vo * c
    P = np.cumsum(terms, axis=1)
    idx = np.asarray(sizes) - 1
    snaps = np.where(idx >= 0, P[:, np.maximum(idx, 0)], 0.0)
    num = float(np.sum(w * np.max(snaps**2, axis=1)))
    den = float(np.sum(w * snaps[:, -1] ** 2))
    if den <= 0:
        raise DomainError("||p_n||_2 is zero")
    ratio = math.sqrt(num / den)
    mag = np.cumsum(np.abs(terms), axis=1)
    d = Vo.shape[1]
    # each snapshot has absolute error <= d * u * mag; propagate to both norms
    delta = float(np.max(mag)) * (d + 2) * 2.0**-53 if Vo.size else 0.0
    pmax = float(np.sqrt(np.max(snaps**2))) if snaps.size else 0.0
    rel = (2 * pmax * delta + delta**2) / max(min(num, den), 1e-300)
    err = ratio * (rel + 4 * 2.0**-53)
    return ratio, err


@dataclass(frozen=True)
class Certified:
    """A float with an absolute error bound; exact squares kept when available."""

    value: float
    err: float
    kind: str  # "exact" or "float"
    num_sq: RadScalar | None = None
    den_sq: RadScalar | None = None

    def __float__(self):
        return self.value


def kappa_ratio(family: MonotoneFamily, exact: bool | None = None) -> Certified:
    """``||max_m |p_m| ||_2 / ||p_n||_2`` with an error bound."""
    if exact is None:
        exact = len(family.order) * family.n <= 4096
    if exact:
        b, rows = family.snapshot_table()
        lens = atom_lengths(b)
        num = RadScalar(0)
        den = RadScalar(0)
        for ln, r in zip(lens, rows):
            best = RadScalar(0)
            for v in r:
                sq = v * v
                if sq > best:
                    best = sq
            num = num + best * ln
            last = r[-1]
            den = den + last * last * ln
        if den.is_zero():
            raise DomainError("||p_n||_2 is zero")
        # ratio^2 = num/den; enclose each and take the square root
        nlo, nhi = num.enclosure(1e-30)
        dlo, dhi = den.enclosure(1e-30)
        lo, hi = _sqrt_enclosure(nlo / dhi, nhi / dlo, bits=90)
        val = float((lo + hi) / 2)
        return Certified(val, float(hi - lo) / 2 + abs(val) * 2.0**-52, "exact", num, den)
    grid = FloatGrid.cached(family.system, family.order)
    Vo = grid.columns(family.order)
    c = np.array([float(family.coeffs[j]) for j in family.order])
    val, err = _float_ratio(Vo, grid.w, family.sizes, c)
    return Certified(val, err, "float")


# -- good lambda -------------------------------------------------------------------


@dataclass
class GoodLambdaRow:
    lam: object
    eps: object
    lhs: Fraction | None  # |{Mf > lam, Sf < eps lam}|
    rhs: Fraction | None  # |{Mf > lam/2}|
    ratio: object = None  # lhs / rhs, None when rhs == 0
    mid: Fraction | None = None  # |{Mf > lam}|
    group: object = None

    @property
    def flagged(self) -> bool:
        return self.rhs == 0


def _fmt(x) -> str:
    if isinstance(x, RadScalar):
        from .serialize import rad_str

        return rad_str(x)
    return "" if x is None else str(x)


def _flt(x) -> str:
    return "" if x is None else repr(float(x))


@dataclass
class GoodLambdaTable:
    rows: list = field(default_factory=list)

    COLUMNS = ("lambda", "eps", "lhs", "rhs", "ratio", "lambda_f", "eps_f", "lhs_f", "rhs_f", "ratio_f")

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(",".join([
                _fmt(r.lam), _fmt(r.eps), _fmt(r.lhs), _fmt(r.rhs), _fmt(r.ratio),
                _flt(r.lam), _flt(r.eps), _flt(r.lhs), _flt(r.rhs), _flt(r.ratio),
            ]))
        return "\n".join(lines) + "\n"

    def by_lambda(self) -> dict:
        out: dict = {}
        for r in self.rows:
            out.setdefault(r.lam, []).append(r)
        return out


def good_lambda_scan(coeffs, system: OrthoSystem, lam_grid, eps_grid) -> GoodLambdaTable:
    """Exact level-set measures of the good-lambda sets on a (lambda, eps) grid."""
    lam_grid = [rad(l) for l in lam_grid]
    eps_grid = [as_fraction(e) for e in eps_grid]
    if any(l <= 0 for l in lam_grid) or any(e <= 0 for e in eps_grid):
        raise ValidationError("grids must be positive")
    M = maximal_fn(coeffs, system)
    S = square_fn(coeffs, system)
    if not any(M.values):
        raise DomainError("f is zero")
    b, (mv, sv) = align([M, S])
    lens = atom_lengths(b)
    table = GoodLambdaTable()
    for lam in lam_grid:
        above = [v > lam for v in mv]
        half = [v > lam / 2 for v in mv]
        rhs = sum((ln for ln, h in zip(lens, half) if h), Fraction(0))
        mid = sum((ln for ln, h in zip(lens, above) if h), Fraction(0))
        for eps in eps_grid:
            cut = lam * eps
            lhs = sum(
                (ln for ln, a, s in zip(lens, above, sv) if a and s < cut),
                Fraction(0),
            )
            ratio = lhs / rhs if rhs else None
            table.rows.append(GoodLambdaRow(lam, eps, lhs, rhs, ratio, mid))
    return table


@dataclass
class CWWFit:
    c_fit: float | None
    residual: float | None
    n_rows: int
    n_groups: int
    defined: bool
    message: str = ""


def cww_exponent_fit(tables, min_rows: int = 3) -> CWWFit:
    """Least-squares slope of ``log(ratio)`` against ``-1/eps^2``.

    Rows are grouped by (table, lambda) and each group gets its own intercept,
    so pooling several polynomials or levels only shares the exponent.
    """
    if isinstance(tables, GoodLambdaTable):
        tables = [tables]
    groups: dict = {}
    for t_id, t in enumerate(tables):
        rows = t.rows if isinstance(t, GoodLambdaTable) else t
        for r in rows:
            if r.ratio is None or float(r.ratio) <= 0:
                continue
            key = (t_id, r.lam if r.group is None else r.group)
            groups.setdefault(key, []).append((-1.0 / float(r.eps) ** 2, math.log(float(r.ratio))))
    n_rows = sum(len(g) for g in groups.values())
    if n_rows < min_rows:
        return CWWFit(None, None, n_rows, len(groups), False, "fewer than %d positive rows" % min_rows)
    sxx = sxy = 0.0
    resid = []
    for pts in groups.values():
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        xc, yc = xs - xs.mean(), ys - ys.mean()
        sxx += float(xc @ xc)
        sxy += float(xc @ yc)
        resid.append((xc, yc))
    if sxx == 0:
        return CWWFit(None, None, n_rows, len(groups), False, "no eps variation within any group")
    c = sxy / sxx
    ss = sum(float(np.sum((yc - c * xc) ** 2)) for xc, yc in resid)
    return CWWFit(c, math.sqrt(ss / n_rows), n_rows, len(groups), True)


def cww_eps(n: int, c: float = 1.0) -> float:
    """``(c / ln n)^{1/2}``, the cut-off used for a family of length n."""
    if n < 2:
        raise DomainError("needs n >= 2")
    return math.sqrt(c / math.log(n))


# -- maximal ratio report ------------------------------------------------------


@dataclass
class MRReport:
    rows: list  # dicts
    max_over_log: float
    max_over_sqrt_log: float
    cs_violations: list


def mr_ratio_check(families: Sequence[MonotoneFamily], exact: bool | None = None) -> MRReport:
    rows = []
    cs_bad = []
    for i, fam in enumerate(families):
        kr = kappa_ratio(fam, exact)
        n = fam.n
        lg = math.log2(n + 1)
        row = {
            "n": n,
            "ratio": kr.value,
            "err": kr.err,
            "kind": kr.kind,
            "ratio_over_log": kr.value / lg,
            "ratio_over_sqrt_log": kr.value / math.sqrt(lg),
        }
        rows.append(row)
        # ||p*||^2 <= sum_m ||p_m||^2 <= n ||p_n||^2 for orthonormal nested families
        if kr.value - kr.err > math.sqrt(n):
            cs_bad.append(i)
    return MRReport(
        rows,
        max((r["ratio_over_log"] for r in rows), default=0.0),
        max((r["ratio_over_sqrt_log"] for r in rows), default=0.0),
        cs_bad,
    )


def random_polynomial(max_index: int, terms: int = 64, seed=0, coeff_range: int = 3) -> dict:
    """``terms`` distinct indices from 1..max_index with nonzero integer coefficients.

    Drawing the support from a wider range keeps Sf non-constant; with
    coefficients +-1 on h_1..h_64 the square function would be flat.
    """
    import random as _random

    if terms > max_index:
        raise ValidationError("more terms than indices")
    rng = _random.Random(seed)
    idx = sorted(rng.sample(range(1, max_index + 1), terms))
    choices = [c for c in range(-coeff_range, coeff_range + 1) if c]
    return {j: Fraction(rng.choice(choices)) for j in idx}
