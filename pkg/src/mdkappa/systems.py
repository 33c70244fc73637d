"""Filtrations, martingale-difference systems and Haar-type bases.

Indexing is 1-based throughout (``system[1]`` is the first function), with
the usual Haar enumeration: ``h_1 = 1`` and then the tree nodes in
breadth-first order, so ``h_{2^j + i}`` lives on the ``i``-th dyadic interval
of length ``2^-j``.  Filtrations split one block per index: level ``n`` is the
partition on which ``f_1..f_n`` are all constant.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .errors import ValidationError
from .mp import Partition, PwAffineMap, pullback
from .pcf import PCF, Antiderivative, align, atom_lengths, inner, integrate, lincomb
from .radical import RadScalar, as_fraction, rad
from .sets import SimpleSet, UNIT

__all__ = [
    "SplitTree",
    "Filtration",
    "OrthoSystem",
    "HaarNode",
    "NonOverlapFamily",
    "classical_haar",
    "generalized_haar",
    "rademacher",
    "transformed_system",
    "verify_md",
    "MDReport",
    "expand",
    "Expansion",
    "reconstruct",
    "gram_matrix",
    "quadruple_check",
    "QuadrupleReport",
    "haar_node_values",
]


def haar_node_values(lo, split, hi) -> tuple[RadScalar, RadScalar]:
    """Left value ``c1`` and right magnitude ``c2`` of the normalised node function."""
    a = as_fraction(split) - as_fraction(lo)
    b = as_fraction(hi) - as_fraction(split)
    if a <= 0 or b <= 0:
        raise ValidationError(f"split {split} not strictly inside [{lo},{hi})")
    return RadScalar.sqrt_of(b / (a * (a + b))), RadScalar.sqrt_of(a / (b * (a + b)))


@dataclass(frozen=True)
class HaarNode:
    lo: Fraction
    split: Fraction
    hi: Fraction
    sign: int = 1

    def values(self) -> tuple[RadScalar, RadScalar]:
        return haar_node_values(self.lo, self.split, self.hi)

    def function(self) -> PCF:
        c1, c2 = self.values()
        s = self.sign
        return PCF.from_pieces([(self.lo, self.split, c1 * s), (self.split, self.hi, -c2 * s)])


class SplitTree:
    """Complete binary tree of intervals rooted at [0, 1), stored breadth-first."""

    def __init__(self, splits: Sequence, signs: Sequence[int] | None = None):
        splits = [as_fraction(s) for s in splits]
        n = len(splits)
        depth = (n + 1).bit_length() - 1
        if n != 2**depth - 1:
            raise ValidationError("a complete tree needs 2^D - 1 split points")
        signs = list(signs) if signs is not None else [1] * n
        if len(signs) != n or any(s not in (1, -1) for s in signs):
            raise ValidationError("signs must be +/-1, one per node")
        nodes: list[HaarNode] = []
        bounds = [(Fraction(0), Fraction(1))]
        for k, (s, sg) in enumerate(zip(splits, signs)):
            lo, hi = bounds[k]
            if not lo < s < hi:
                raise ValidationError(f"split {s} of node {k + 1} not inside [{lo},{hi})")
            nodes.append(HaarNode(lo, s, hi, sg))
            bounds.append((lo, s))
            bounds.append((s, hi))
        self.depth = depth
        self.nodes = nodes

    @classmethod
    def from_rule(cls, depth: int, rule: Callable[[Fraction, Fraction, int], Fraction], signs=None):
        splits = []
        bounds = [(Fraction(0), Fraction(1), 0)]
        for k in range(2**depth - 1):
            lo, hi, lev = bounds[k]
            s = as_fraction(rule(lo, hi, lev))
            splits.append(s)
            bounds.append((lo, s, lev + 1))
            bounds.append((s, hi, lev + 1))
        return cls(splits, signs)

    @classmethod
    def midpoint(cls, depth: int, signs=None) -> "SplitTree":
        return cls.from_rule(depth, lambda lo, hi, lev: (lo + hi) / 2, signs)

    @classmethod
    def ratio(cls, depth: int, r, signs=None) -> "SplitTree":
        r = as_fraction(r)
        return cls.from_rule(depth, lambda lo, hi, lev: lo + r * (hi - lo), signs)

    @classmethod
    def dyadic_skew(cls, depth: int, root="1/4", signs=None) -> "SplitTree":
        """Root split at ``root``; every other node at its coarsest interior dyadic point.

        Unbalanced, yet every dyadic step function is exactly representable at
        finite depth.
        """
        root = as_fraction(root)

        def rule(lo, hi, lev):
            if lev == 0:
                return root
            d = 1
            while True:
                k = (lo * d).__floor__() + 1
                x = Fraction(k, d)
                if lo < x < hi:
                    return x
                d *= 2

        return cls.from_rule(depth, rule, signs)

    @classmethod
    def random(cls, depth: int, seed=0, ratios=("1/4", "1/3", "1/2", "2/3", "3/4"), signs=None):
        rng = random.Random(seed)
        rs = [as_fraction(r) for r in ratios]
        return cls.from_rule(depth, lambda lo, hi, lev: lo + rng.choice(rs) * (hi - lo), signs)

    @property
    def splits(self) -> list[Fraction]:
        return [nd.split for nd in self.nodes]

    def max_leaf_lengths(self) -> list[Fraction]:
        """Largest block length after each full level of splits (condition 3 diagnostic)."""
        out = []
        for d in range(1, self.depth + 1):
            lev = self.nodes[2 ** (d - 1) - 1 : 2**d - 1]
            out.append(max(max(nd.split - nd.lo, nd.hi - nd.split) for nd in lev))
        return out

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "splits": [str(s) for s in self.splits],
            "signs": [nd.sign for nd in self.nodes],
        }

    @classmethod
    def from_json(cls, d) -> "SplitTree":
        if isinstance(d, list):
            return cls(d)
        return cls(d["splits"], d.get("signs"))


class Filtration:
    """Levels ``A_1, A_2, ...`` of partitions, each refined by the next.

    Either an explicit list of partitions, or interval cut points added one
    level at a time (``cuts[n-1]`` is the list of points added at level n).
    """

    def __init__(self, levels: Sequence[Partition] | None = None, *, cuts=None, level_fn=None, size=None):
        self._levels = list(levels) if levels is not None else None
        self._cuts = [list(c) for c in cuts] if cuts is not None else None
        self._fn = level_fn
        if self._levels is not None:
            self._size = len(self._levels)
        elif self._cuts is not None:
            self._size = len(self._cuts)
        else:
            self._size = size

    def __len__(self):
        return self._size

    def level(self, n: int) -> Partition:
        if not 1 <= n <= self._size:
            raise IndexError(f"filtration level {n} out of range 1..{self._size}")
        if self._levels is not None:
            return self._levels[n - 1]
        if self._cuts is not None:
            pts = [p for c in self._cuts[:n] for p in c]
            return Partition.from_points(pts)
        return self._fn(n)

    def is_interval_filtration(self) -> bool:
        if self._cuts is not None:
            return True
        return all(self.level(n).is_interval_partition() for n in range(1, self._size + 1))

    def children(self, n: int) -> dict:
        """Map each block of level n to its blocks at level n + 1."""
        nxt = self.level(n + 1).blocks
        return {b: [c for c in nxt if c.issubset(b)] for b in self.level(n).blocks}

    def verify_nested(self) -> list:
        """Levels at which some block is not the union of its children."""
        bad = []
        for n in range(1, self._size):
            for b, ch in self.children(n).items():
                u = SimpleSet()
                for c in ch:
                    u = u | c
                if u != b:
                    bad.append((n, b))
        return bad


@dataclass
class OrthoSystem:
    functions: list
    kind: str = "custom"
    filtration: Filtration | None = None
    nodes: list | None = None  # per function: HaarNode or None (constant)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.functions)

    def __getitem__(self, k: int) -> PCF:
        if not 1 <= k <= len(self.functions):
            raise IndexError(f"system index {k} out of range 1..{len(self.functions)}")
        return self.functions[k - 1]

    def polynomial(self, coeffs: dict) -> PCF:
        ks = sorted(coeffs)
        return lincomb([coeffs[k] for k in ks], [self[k] for k in ks])

    def replace(self, k: int, f: PCF) -> "OrthoSystem":
        fs = list(self.functions)
        fs[k - 1] = f
        return OrthoSystem(fs, self.kind, self.filtration, None, dict(self.meta))

    def truncate(self, n: int) -> "OrthoSystem":
        filt = self.filtration
        if filt is not None and len(filt) > n:
            src = filt
            filt = Filtration(level_fn=src.level, size=n)
            if src._cuts is not None:
                filt = Filtration(cuts=src._cuts[:n])
        nodes = self.nodes[:n] if self.nodes is not None else None
        return OrthoSystem(self.functions[:n], self.kind, filt, nodes, dict(self.meta))


def _tree_system(tree: SplitTree, n: int | None, kind: str) -> OrthoSystem:
    total = 2**tree.depth
    n = total if n is None else n
    if n > total:
        raise ValidationError(f"tree of depth {tree.depth} has only {total} functions")
    fs = [PCF.constant(1)]
    nodes: list = [None]
    for nd in tree.nodes[: n - 1]:
        fs.append(nd.function())
        nodes.append(nd)
    cuts = [[]] + [[nd.split] for nd in tree.nodes[: n - 1]]
    return OrthoSystem(fs, kind, Filtration(cuts=cuts), nodes, {"tree": tree})


def classical_haar(N: int, signs=None) -> OrthoSystem:
    """First ``N`` L2-normalised classical Haar functions."""
    if N < 1:
        raise ValidationError("need at least one function")
    depth = max((N - 1).bit_length(), 1)
    tree = SplitTree.midpoint(depth, signs)
    return _tree_system(tree, N, "classical-haar")


def generalized_haar(tree: SplitTree, N: int | None = None) -> OrthoSystem:
    return _tree_system(tree, N, "generalized-haar")


def rademacher(N: int) -> OrthoSystem:
    if N < 1:
        raise ValidationError("need at least one function")
    fs = []
    for k in range(1, N + 1):
        d = 1 << k
        fs.append(PCF.from_atoms([Fraction(m, d) for m in range(d)],
                                 [RadScalar(1 if m % 2 == 0 else -1) for m in range(d)]))
    cuts = [[Fraction(m, 1 << k) for m in range(1, 1 << k, 2)] for k in range(1, N + 1)]
    return OrthoSystem(fs, "rademacher", Filtration(cuts=cuts))


def transformed_system(system: OrthoSystem, tau: PwAffineMap) -> OrthoSystem:
    """``{f_k o tau}`` with the pulled-back filtration."""
    fs = [pullback(f, tau) for f in system.functions]
    filt = None
    if system.filtration is not None:
        base = system.filtration
        filt = Filtration(
            level_fn=lambda n: Partition([tau.preimage(b) for b in base.level(n).blocks]),
            size=len(base),
        )
    return OrthoSystem(fs, "transformed", filt, None, {"base_kind": system.kind})


# -- verification ------------------------------------------------------------


@dataclass
class MDReport:
    n: int
    constancy_failures: list = field(default_factory=list)
    mean_zero_failures: list = field(default_factory=list)
    gram_failures: list = field(default_factory=list)
    completeness_failures: list = field(default_factory=list)
    nesting_failures: list = field(default_factory=list)
    checked_gram: bool = False
    checked_completeness: bool = False

    @property
    def ok(self) -> bool:
        return not (
            self.constancy_failures
            or self.mean_zero_failures
            or self.gram_failures
            or self.completeness_failures
            or self.nesting_failures
        )


def gram_matrix(system: OrthoSystem, N: int | None = None) -> list[list[RadScalar]]:
    N = len(system) if N is None else N
    G = [[RadScalar(0)] * N for _ in range(N)]
    for i in range(N):
        for j in range(i, N):
            v = inner(system.functions[i], system.functions[j])
            G[i][j] = G[j][i] = v
    return G


def verify_md(system: OrthoSystem, gram_limit: int = 64, completeness: bool | None = None) -> MDReport:
    """Exact check of the martingale-difference conditions, orthonormality and completeness."""
    if system.filtration is None:
        raise ValidationError("verify_md needs a filtration")
    N = len(system)
    filt = system.filtration
    rep = MDReport(N)
    prev = None
    for n in range(1, N + 1):
        level = filt.level(n)
        f = system[n]
        for b in level.blocks:
            if not f.is_constant_on(b):
                rep.constancy_failures.append((n, b))
        if n >= 2:
            for b in prev.blocks:
                m = integrate(f, b)
                if m:
                    rep.mean_zero_failures.append((n, b, m))
            if not level.refines(prev):
                rep.nesting_failures.append(n)
        prev = level
    if N <= gram_limit:
        rep.checked_gram = True
        G = gram_matrix(system)
        for i in range(N):
            for j in range(N):
                if G[i][j] != (1 if i == j else 0):
                    rep.gram_failures.append((i + 1, j + 1, G[i][j]))
    if completeness is None:
        completeness = system.kind in ("classical-haar", "generalized-haar") and N <= 256
    if completeness:
        rep.checked_completeness = True
        depth = system.meta.get("tree").depth if "tree" in system.meta else None
        for b in filt.level(N).blocks:
            ind = PCF.indicator(b)
            ex = expand(ind, system)
            nz = sum(1 for c in ex.coeffs if c)
            if ex.residual or (depth is not None and nz > depth + 1):
                rep.completeness_failures.append((b, ex.residual, nz))
    return rep


# -- expansion ---------------------------------------------------------------


@dataclass
class Expansion:
    coeffs: list  # coeffs[i-1] = <f, phi_i>
    norm_sq: RadScalar

    @property
    def energy(self) -> RadScalar:
        acc = RadScalar(0)
        for c in self.coeffs:
            if c:
                acc = acc + c * c
        return acc

    @property
    def residual(self) -> RadScalar:
        """``||f||^2 - sum c_i^2``: the energy the truncated system misses."""
        return self.norm_sq - self.energy


def node_coefficients(F: Antiderivative, nodes: Sequence) -> list[RadScalar]:
    out = []
    for nd in nodes:
        if nd is None:
            out.append(F.total)
            continue
        c1, c2 = nd.values()
        left = F(nd.split) - F(nd.lo)
        right = F(nd.hi) - F(nd.split)
        c = c1 * left - c2 * right
        out.append(c if nd.sign == 1 else -c)
    return out


def expand(f: PCF, system: OrthoSystem, upto: int | None = None) -> Expansion:
    """Exact Fourier coefficients ``<f, phi_i>`` for ``i <= upto``."""
    upto = len(system) if upto is None else min(upto, len(system))
    norm_sq = integrate(f.square())
    if system.nodes is not None:
        coeffs = node_coefficients(Antiderivative(f), system.nodes[:upto])
    else:
        coeffs = [inner(f, system[i]) for i in range(1, upto + 1)]
    return Expansion(coeffs, norm_sq)


def reconstruct(coeffs: Sequence, system: OrthoSystem) -> PCF:
    return lincomb(list(coeffs), system.functions[: len(coeffs)])


# -- non-overlapping polynomials ---------------------------------------------


class NonOverlapFamily:
    """Polynomials ``p_k = sum_{j in G_k} c_j phi_j`` over index groups ``G_k``."""

    def __init__(self, groups: Sequence[dict], *, require_disjoint: bool = True):
        self.groups = [{int(j): rad(c) for j, c in g.items()} for g in groups]
        if require_disjoint and not self.is_disjoint():
            raise ValidationError("index groups overlap")

    def is_disjoint(self) -> bool:
        seen: set = set()
        for g in self.groups:
            if seen & g.keys():
                return False
            seen |= g.keys()
        return True

    def __len__(self):
        return len(self.groups)

    def polynomials(self, system: OrthoSystem) -> list[PCF]:
        return [system.polynomial(g) for g in self.groups]

    def norms_sq(self) -> list[RadScalar]:
        """``||p_k||^2`` assuming an orthonormal base system."""
        out = []
        for g in self.groups:
            acc = RadScalar(0)
            for c in g.values():
                acc = acc + c * c
            out.append(acc)
        return out

    @classmethod
    def singletons(cls, indices: Iterable[int]) -> "NonOverlapFamily":
        return cls([{j: 1} for j in indices])

    @classmethod
    def random(cls, n_polys: int, max_index: int, seed=0, max_size: int = 4) -> "NonOverlapFamily":
        rng = random.Random(seed)
        pool = list(range(1, max_index + 1))
        rng.shuffle(pool)
        groups = []
        for _ in range(n_polys):
            size = rng.randint(1, max_size)
            if len(pool) < size:
                raise ValidationError("not enough indices for the requested family")
            idx, pool = pool[:size], pool[size:]
            groups.append({j: Fraction(rng.choice([-3, -2, -1, 1, 2, 3]), rng.choice([1, 2, 3])) for j in idx})
        return cls(groups)


@dataclass
class QuadrupleReport:
    trials: int
    nonzero: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.nonzero


def quadruple_check(family: NonOverlapFamily, system: OrthoSystem, trials: int = 50, seed=0,
                    require_disjoint: bool = True) -> QuadrupleReport:
    """Exact ``int p_a p_b p_c p_d`` over random quadruples of distinct family members."""
    if require_disjoint and not family.is_disjoint():
        raise ValidationError("quadruple check is defined for non-overlapping families")
    if len(family) < 4:
        raise ValidationError("need at least four polynomials")
    polys = family.polynomials(system)
    rng = random.Random(seed)
    rep = QuadrupleReport(trials)
    for _ in range(trials):
        q = tuple(sorted(rng.sample(range(len(polys)), 4)))
        b, cols = align([polys[i] for i in q])
        acc = RadScalar(0)
        for ln, a, bb, c, d in zip(atom_lengths(b), *cols):
            if a and bb and c and d:
                acc = acc + a * bb * c * d * ln
        if acc:
            rep.nonzero.append((tuple(i + 1 for i in q), acc))
    return rep
