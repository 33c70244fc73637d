"""Inductive construction of a transformed martingale difference sequence and
non-overlapping polynomials of a complete system that approximate it.

Step l+1, given tau_l and f~_1..f~_l:

* A is the partition into maximal sets where f~_1..f~_l are all constant;
* f_{l+1} o tau_l has zero mean on every block of A (checked exactly);
* tau_{l+1} = tau_l o u_{A,n} for the first n in the schedule whose head
  energy sum_{i<=m} c_i^2 is below eps^2/4 (m = last index already used);
* p_{l+1} = sum_{m<i<=r} c_i phi_i with the smallest r whose tail energy is
  below eps^2/4.

All quantities are exact, and every error bound is re-derived from the PCFs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import LemmaFailure, PreconditionError, ValidationError
from .mp import Partition, PwAffineMap, compose, identity_map, pullback, u_partition_map
from .pcf import PCF, Antiderivative, align, integrate, joint_level_measure, lincomb
from .radical import RadScalar, as_fraction
from .sets import SimpleSet
from .systems import NonOverlapFamily, OrthoSystem, node_coefficients, transformed_system

__all__ = [
    "constancy_partition",
    "default_schedule",
    "default_eps",
    "StepRecord",
    "Lemma1State",
    "Lemma1Report",
    "lemma1_step",
    "lemma1_run",
    "TransformationReport",
    "transformation_check",
    "random_probes",
]


def constancy_partition(functions: Sequence[PCF]) -> Partition:
    """Blocks on which every function is constant, grouped by joint value vector."""
    if not functions:
        return Partition.trivial()
    b, cols = align(list(functions))
    ends = b[1:] + [Fraction(1)]
    groups: dict = {}
    for i, (lo, hi) in enumerate(zip(b, ends)):
        groups.setdefault(tuple(col[i] for col in cols), []).append((lo, hi))
    blocks = sorted((SimpleSet._from_pairs(p) for p in groups.values()), key=lambda s: s.intervals[0].lo)
    return Partition(blocks)


def default_schedule(max_exp: int = 10) -> list[int]:
    return [1 << t for t in range(max_exp + 1)]


def default_eps(K: int) -> list[Fraction]:
    """``eps_k = 2^{-k-1}``."""
    return [Fraction(1, 1 << (k + 1)) for k in range(1, K + 1)]


@dataclass
class StepRecord:
    k: int
    n: int
    m: int
    r: int
    eps: Fraction
    head: RadScalar
    tail: RadScalar
    error_sq: RadScalar
    coeffs: list  # c_{m+1..r}
    head_trace: list  # (n, float head energy)

    @property
    def error(self) -> float:
        return float(self.error_sq.sqrt()) if self.error_sq.is_rational() else float(self.error_sq) ** 0.5

    def to_json(self) -> dict:
        return {
            "k": self.k, "n": self.n, "window": [self.m, self.r], "eps": str(self.eps),
            "head": float(self.head), "tail": float(self.tail),
            "error_sq": float(self.error_sq), "error_sq_exact_zero": self.error_sq.is_zero(),
            "head_trace": self.head_trace,
        }


@dataclass
class Lemma1State:
    tau: PwAffineMap = field(default_factory=identity_map)
    transformed: list = field(default_factory=list)  # f~_k
    polys: list = field(default_factory=list)  # p_k
    records: list = field(default_factory=list)

    @property
    def step(self) -> int:
        return len(self.transformed)

    @property
    def last_index(self) -> int:
        return self.records[-1].r if self.records else 0

    def windows(self) -> list[tuple[int, int]]:
        return [(rec.m, rec.r) for rec in self.records]


def _coefficients(f: PCF, phi: OrthoSystem, lo: int, hi: int, F: Antiderivative | None = None):
    """``<f, phi_i>`` for lo < i <= hi."""
    if lo >= hi:
        return []
    if phi.nodes is not None:
        F = F or Antiderivative(f)
        return node_coefficients(F, phi.nodes[lo:hi])
    return [integrate(f * phi[i]) for i in range(lo + 1, hi + 1)]


def _block_means(f: PCF, A: Partition) -> list:
    return [(a, integrate(f, a)) for a in A.blocks]


def lemma1_step(state: Lemma1State, f_next: PCF, phi: OrthoSystem, eps, n_schedule=None) -> Lemma1State:
    eps = as_fraction(eps)
    if eps <= 0:
        raise ValidationError("eps must be positive")
    quarter = RadScalar(eps * eps / 4)
    schedule = list(n_schedule) if n_schedule is not None else default_schedule()
    A = constancy_partition(state.transformed)
    base = pullback(f_next, state.tau)
    # the base step has nothing to be orthogonal to; f_1 may be the constant
    bad = [(a, v) for a, v in _block_means(base, A) if not v.is_zero()] if state.step else []
    if bad:
        raise PreconditionError("f_next o tau has nonzero mean on a constancy block", witness=bad[0])
    m = state.last_index
    k = state.step + 1
    trace = []
    chosen = None
    for n in schedule:
        tau_n = compose(state.tau, u_partition_map(A, n)) if n > 1 else state.tau
        ft = pullback(f_next, tau_n)
        F = Antiderivative(ft)
        head_c = _coefficients(ft, phi, 0, m, F)
        head = sum((c * c for c in head_c if c), RadScalar(0))
        trace.append((n, float(head)))
        if head < quarter:
            chosen = (n, tau_n, ft, F, head)
            break
    if chosen is None:
        raise LemmaFailure(f"step {k}: schedule exhausted before head energy fell below eps^2/4", trace=trace)
    n, tau_n, ft, F, head = chosen
    norm_sq = integrate(ft.square())
    energy = head
    coeffs: list = []
    r = m
    chunk = 64
    tail = norm_sq - energy
    while not tail < quarter:
        if r >= len(phi):
            raise LemmaFailure(
                f"step {k}: tail energy {float(tail):.3g} not below eps^2/4 = {float(quarter):.3g} "
                f"with all {len(phi)} functions", trace=trace + [("tail", float(tail))])
        new = _coefficients(ft, phi, r, min(r + chunk, len(phi)), F)
        for c in new:
            coeffs.append(c)
            r += 1
            if c:
                energy = energy + c * c
                tail = norm_sq - energy
                if tail < quarter:
                    break
        chunk *= 2
    p = lincomb([c for c in coeffs], phi.functions[m:r]) if r > m else PCF.zero()
    # independent certificate from the PCFs themselves
    err_sq = norm_sq - 2 * integrate(ft * p) + integrate(p.square())
    if not err_sq < RadScalar(eps * eps):
        raise LemmaFailure(f"step {k}: error certificate failed", trace=trace + [("error_sq", float(err_sq))])
    rec = StepRecord(k, n, m, r, eps, head, tail, err_sq, coeffs, trace)
    # u_{A,n} maps every block of A onto itself, so f~_1..f~_l are unchanged
    return Lemma1State(tau_n, state.transformed + [ft], state.polys + [p], state.records + [rec])


@dataclass
class Lemma1Report:
    steps: list
    tau: PwAffineMap
    windows: list
    disjoint: bool

    @property
    def ok(self) -> bool:
        return self.disjoint and all(s.error_sq < RadScalar(s.eps * s.eps) for s in self.steps)

    def to_json(self) -> dict:
        return {"steps": [s.to_json() for s in self.steps], "windows": [list(w) for w in self.windows],
                "disjoint": self.disjoint, "ok": self.ok, "tau_pieces": len(self.tau)}


def lemma1_run(F: OrthoSystem, phi: OrthoSystem, eps_list=None, K: int | None = None, n_schedule=None):
    """Run K steps on the first K functions of the MD system F.

    Returns (transformed system, non-overlapping family of phi, report).
    """
    K = len(F) if K is None else K
    if K > len(F):
        raise ValidationError("K exceeds the length of F")
    if F.filtration is not None and not F.filtration.is_interval_filtration():
        raise PreconditionError("F must be adapted to a filtration of intervals")
    eps_list = default_eps(K) if eps_list is None else [as_fraction(e) for e in eps_list]
    if len(eps_list) < K:
        raise ValidationError("need one eps per step")
    state = Lemma1State()
    for k in range(1, K + 1):
        state = lemma1_step(state, F[k], phi, eps_list[k - 1], n_schedule)
    windows = state.windows()
    disjoint = all(a[1] <= b[0] for a, b in zip(windows, windows[1:])) and all(m <= r for m, r in windows)
    groups = [{rec.m + 1 + i: c for i, c in enumerate(rec.coeffs) if c} for rec in state.records]
    family = NonOverlapFamily(groups)
    return transformed_system(F.truncate(K), state.tau), family, Lemma1Report(state.records, state.tau, windows, disjoint)


# -- transformations of systems ----------------------------------------------------


@dataclass
class TransformationReport:
    checked: int
    violations: list  # (probe, lhs, rhs)

    @property
    def ok(self) -> bool:
        return not self.violations


def random_probes(system: OrthoSystem, count: int = 50, seed=0, max_size: int = 3, upto: int | None = None):
    """Random (indices, thresholds) with thresholds drawn from the functions' own values."""
    rng = random.Random(seed)
    N = len(system) if upto is None else min(upto, len(system))
    out = []
    for _ in range(count):
        size = rng.randint(1, min(max_size, N))
        idx = rng.sample(range(1, N + 1), size)
        lams = []
        for j in idx:
            vals = sorted(set(system[j].values))
            v = rng.choice(vals)
            lams.append(v - Fraction(rng.choice([0, 1]), 7))
        out.append((tuple(idx), tuple(lams)))
    return out


def transformation_check(original: OrthoSystem, transformed: OrthoSystem | None, tau: PwAffineMap | None,
                         probes) -> TransformationReport:
    """Joint super-level measures of the two systems agree on every probe."""
    if transformed is None:
        if tau is None:
            raise ValidationError("need the transformed system or the map")
        transformed = transformed_system(original, tau)
    rep = TransformationReport(0, [])
    for idx, lams in probes:
        lhs = joint_level_measure([(original[j], l, ">") for j, l in zip(idx, lams)])
        rhs = joint_level_measure([(transformed[j], l, ">") for j, l in zip(idx, lams)])
        rep.checked += 1
        if lhs != rhs:
            rep.violations.append(((idx, lams), lhs, rhs))
    return rep
