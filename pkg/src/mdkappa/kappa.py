"""Computing and bounding the maximal-partial-sum constant kappa_n.

For a fixed structure ``G_1 <= ... <= G_n`` and a fixed choice of which
partial sum attains the maximum on each atom (a selection pattern), the
squared numerator is a quadratic form in the coefficients.  kappa^2 is the
largest top eigenvalue over all patterns.  ``exact_kappa`` enumerates the
patterns, ``alt_max_kappa`` alternates between pattern and eigenvector.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky, eigh, solve_triangular

from .errors import BudgetError, ValidationError
from .operators import Certified, FloatGrid, MonotoneFamily, _float_ratio, kappa_ratio
from .systems import OrthoSystem, classical_haar

__all__ = [
    "Structure",
    "KappaEstimate",
    "SignGrid",
    "rademacher_grid",
    "exact_kappa",
    "alt_max_kappa",
    "nu_search",
    "nu_ladder",
    "growth_fit",
    "GrowthReport",
    "transfer_kappa_lower",
    "T1_CORPUS_K",
]

# Frozen corpus constant for kappa_ratio / sqrt(log2(n+1)); calibrated on the
# acceptance corpus (observed maximum 1.0 at n = 1, 0.917 for n >= 2) and rounded up.
T1_CORPUS_K = 1.25


@dataclass(frozen=True)
class Structure:
    """Ordered indices with prefix sizes: ``G_m = order[:sizes[m-1]]``."""

    order: tuple
    sizes: tuple

    def __post_init__(self):
        order = tuple(int(j) for j in self.order)
        sizes = tuple(int(s) for s in self.sizes)
        if len(set(order)) != len(order):
            raise ValidationError("repeated index")
        if not sizes or sizes[-1] != len(order) or any(b < a for a, b in zip(sizes, sizes[1:])) or sizes[0] < 0:
            raise ValidationError("sizes must be nondecreasing and end at len(order)")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_permutation(cls, sigma: Sequence[int]) -> "Structure":
        return cls(tuple(sigma), tuple(range(1, len(sigma) + 1)))

    @classmethod
    def from_groups(cls, groups) -> "Structure":
        order: list = []
        sizes = []
        prev: set = set()
        for g in groups:
            gs = set(g)
            if not prev <= gs:
                raise ValidationError("index sets are not nested")
            order.extend(sorted(gs - prev))
            sizes.append(len(order))
            prev = gs
        return cls(tuple(order), tuple(sizes))

    @property
    def n(self) -> int:
        return len(self.sizes)

    def groups(self):
        return [self.order[:s] for s in self.sizes]

    def to_json(self):
        return {"order": list(self.order), "sizes": list(self.sizes)}


class SignGrid:
    """Atom grid given directly as a matrix, for systems too large to build as PCFs.

    Used for the Rademacher system: atoms are sign vectors in {-1, 1}^n with
    equal weight.  ``sampled`` marks a Monte Carlo subset of the atoms.
    """

    def __init__(self, V: np.ndarray, w: np.ndarray, indices: Sequence[int], sampled: bool):
        self.V = V
        self.w = w
        self.indices = tuple(indices)
        self.sampled = sampled

    def columns(self, order):
        pos = {j: i for i, j in enumerate(self.indices)}
        return self.V[:, [pos[j] for j in order]]


def rademacher_grid(n: int, exact_max: int = 20, samples: int = 1 << 16, seed: int = 0) -> SignGrid:
    """Joint law of r_1..r_n: all 2^n sign vectors, or a seeded sample when n > exact_max."""
    if n < 1:
        raise ValidationError("n >= 1")
    if n <= exact_max:
        a = np.arange(1 << n)[:, None]
        bits = (a >> (n - 1 - np.arange(n))[None, :]) & 1
        V = 1.0 - 2.0 * bits
        return SignGrid(V, np.full(1 << n, 2.0**-n), range(1, n + 1), False)
    rng = np.random.default_rng([seed, n])
    V = rng.choice([-1.0, 1.0], size=(samples, n))
    return SignGrid(V, np.full(samples, 1.0 / samples), range(1, n + 1), True)


@dataclass
class KappaEstimate:
    value: float
    coefficients: tuple
    structure: Structure
    kind: str  # exact | local-max | lower-bound
    err: float = 0.0
    meta: dict = field(default_factory=dict)
    system: object = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.structure.n

    def family(self) -> MonotoneFamily:
        if not isinstance(self.system, OrthoSystem):
            raise ValidationError("estimate is not attached to a PCF system")
        return MonotoneFamily.from_structure(
            self.system, self.structure.order, self.structure.sizes,
            dict(zip(self.structure.order, self.coefficients)),
        )

    def reevaluate(self, exact: bool | None = None) -> Certified:
        if isinstance(self.system, SignGrid):
            Vo = self.system.columns(self.structure.order)
            v, e = _float_ratio(Vo, self.system.w, self.structure.sizes, np.array(self.coefficients))
            return Certified(v, e, "float")
        return kappa_ratio(self.family(), exact)

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "err": self.err,
            "kind": self.kind,
            "structure": self.structure.to_json(),
            "coefficients": [float(c) for c in self.coefficients],
            "meta": {k: v for k, v in self.meta.items() if not k.startswith("_")},
        }


# -- shared linear algebra -------------------------------------------------------


def _grid_for(system, structure: Structure):
    if isinstance(system, SignGrid):
        return system
    return FloatGrid.cached(system, structure.order)


class _Forms:
    """Atom data for one structure, whitened so the denominator form is ``|y|^2``."""

    def __init__(self, grid, structure: Structure):
        Vo = grid.columns(structure.order)
        keep = np.any(Vo != 0, axis=1)
        self.V = Vo[keep]
        self.w = grid.w[keep]
        self.sizes = np.asarray(structure.sizes)
        d = Vo.shape[1]
        self.d = d
        G = (self.V * self.w[:, None]).T @ self.V
        self.L = cholesky(G, lower=True)
        # c = L^{-T} y maps the unit sphere onto {c : c^T G c = 1}
        self.M = solve_triangular(self.L, np.eye(d), lower=True, trans="T")
        # column mask per snapshot m
        self.masks = (np.arange(d)[None, :] < self.sizes[:, None]).astype(float)

    def snaps(self, c):
        P = np.cumsum(self.V * c, axis=1)
        idx = self.sizes - 1
        return np.where(idx >= 0, P[:, np.maximum(idx, 0)], 0.0)

    def select(self, c):
        """argmax_m |p_m| per atom, ties toward the largest m."""
        a = np.abs(self.snaps(c))
        top = a.max(axis=1, keepdims=True)
        n = a.shape[1]
        hit = a >= top - 1e-12 * np.maximum(top, 1.0)
        return n - 1 - np.argmax(hit[:, ::-1], axis=1)

    def form(self, pattern):
        U = (self.V * self.masks[pattern]) @ self.M
        return (U * self.w[:, None]).T @ U

    def top(self, Q):
        vals, vecs = eigh(Q)
        y = vecs[:, -1]
        c = self.M @ y
        resid = float(np.linalg.norm(Q @ y - vals[-1] * y))
        return float(vals[-1]), c, resid


def _finish(grid, structure, c, lam, kind, meta, system):
    Vo = grid.columns(structure.order)
    ratio, err = _float_ratio(Vo, grid.w, structure.sizes, c)
    c = c / np.max(np.abs(c))
    meta = dict(meta)
    meta["lambda_max"] = lam
    if getattr(grid, "sampled", False):
        meta["sampled"] = True
    return KappaEstimate(ratio, tuple(float(x) for x in c), structure, kind, err, meta, system)


# -- exact enumeration -----------------------------------------------------------


def exact_kappa(system, structure: Structure, budget_bits: float = 24, batch: int = 4096) -> KappaEstimate:
    """Global maximum over all selection patterns (each solved by its top eigenvalue)."""
    if structure.n == 1:
        c = np.zeros(len(structure.order))
        c[0] = 1.0
        return KappaEstimate(1.0, tuple(c), structure, "exact", 0.0, {"patterns": 1}, system)
    grid = _grid_for(system, structure)
    F = _Forms(grid, structure)
    n = structure.n
    # distinct nonzero masked vectors per atom; keep the largest m of each run
    options = []
    for a in range(F.V.shape[0]):
        seen = {}
        for m in range(n - 1, -1, -1):
            key = tuple(F.V[a] * F.masks[m])
            if any(key) and key not in seen:
                seen[key] = m
        options.append(sorted(seen.values()) or [n - 1])
    count_bits = sum(math.log2(len(o)) for o in options)
    if count_bits > budget_bits:
        raise BudgetError(f"{2 ** count_bits:.3g} selection patterns exceed budget 2^{budget_bits}")
    outer = []
    for a, opts in enumerate(options):
        U = (F.V[a][None, :] * F.masks[opts]) @ F.M
        outer.append(F.w[a] * U[:, :, None] * U[:, None, :])
    radix = [len(o) for o in options]
    total = math.prod(radix)
    best_lam, best_idx = -1.0, 0
    for start in range(0, total, batch):
        ids = np.arange(start, min(start + batch, total))
        digits = np.array(np.unravel_index(ids, radix)).T if len(radix) > 0 else np.zeros((len(ids), 0), int)
        Q = np.zeros((len(ids), F.d, F.d))
        for a in range(len(radix)):
            Q += outer[a][digits[:, a]]
        lam = np.linalg.eigvalsh(Q)[:, -1]
        k = int(np.argmax(lam))
        if lam[k] > best_lam + 1e-15:
            best_lam, best_idx = float(lam[k]), int(ids[k])
    digits = np.unravel_index(best_idx, radix)
    pattern = np.array([options[a][digits[a]] for a in range(len(radix))], dtype=int)
    lam, c, resid = F.top(F.form(pattern))
    return _finish(grid, structure, c, lam, "exact", {"patterns": total, "eig_residual": resid}, system)


# -- alternating maximisation ------------------------------------------------------


def _alt_run(F: _Forms, c, max_iter: int):
    trace = []
    pattern = None
    lam = 0.0
    for _ in range(max_iter):
        new = F.select(c)
        if pattern is not None and np.array_equal(new, pattern):
            break
        pattern = new
        lam_new, c_new, _ = F.top(F.form(pattern))
        trace.append(lam_new)
        stalled = lam_new <= lam * (1 + 1e-13)
        if lam_new >= lam:
            lam, c = lam_new, c_new
        if stalled:
            # ties between equal |p_m| can flip the pattern without changing the value
            break
    return lam, c, trace


def _best_flip(F: _Forms, pattern, lam):
    """Best single-atom change of the pattern, as (lam, atom, m) or None.

    Alternation can stop at a kink where two partial sums tie; a pattern that
    is optimal against every one-atom change is a stronger stopping point.
    """
    Q = F.form(pattern)
    U_all = (F.V[:, None, :] * F.masks[None, :, :]) @ F.M  # atoms x n x d
    cur = U_all[np.arange(len(pattern)), pattern]
    base = Q[None] - F.w[:, None, None] * cur[:, :, None] * cur[:, None, :]
    cand = base[:, None] + F.w[:, None, None, None] * U_all[:, :, :, None] * U_all[:, :, None, :]
    vals = np.linalg.eigvalsh(cand.reshape(-1, F.d, F.d))[:, -1].reshape(len(pattern), -1)
    vals[np.arange(len(pattern)), pattern] = -np.inf
    a, m = np.unravel_index(int(np.argmax(vals)), vals.shape)
    if vals[a, m] > lam * (1 + 1e-12):
        return float(vals[a, m]), int(a), int(m)
    return None


def _alt_flip_run(F: _Forms, c, max_iter: int, flip: bool):
    lam, c, trace = _alt_run(F, c, max_iter)
    if not flip:
        return lam, c, trace
    for _ in range(max_iter):
        pattern = F.select(c)
        move = _best_flip(F, pattern, lam)
        if move is None:
            break
        pattern = pattern.copy()
        pattern[move[1]] = move[2]
        lam_f, c_f, _ = F.top(F.form(pattern))
        trace.append(lam_f)
        lam2, c2, tr = _alt_run(F, c_f, max_iter)
        trace.extend(tr)
        if lam2 >= lam_f:
            lam_f, c_f = lam2, c2
        if lam_f <= lam * (1 + 1e-13):
            break
        lam, c = lam_f, c_f
    return lam, c, trace


def alt_max_kappa(system, structure: Structure, restarts: int = 8, seed: int = 0,
                  max_iter: int = 200, starts: Sequence | None = None, flip: bool | None = None) -> KappaEstimate:
    """Local maximum by alternating selection and top-eigenvector steps.

    Start 0 is the all-ones vector (or the first entry of ``starts``); the rest
    are drawn from a generator keyed by ``(seed, restart)``.  With ``flip`` each
    run ends with single-atom pattern changes until none helps; by default it is
    on when atoms x n x d^2 is small.
    """
    grid = _grid_for(system, structure)
    F = _Forms(grid, structure)
    d = F.d
    if flip is None:
        flip = F.V.shape[0] * structure.n * d * d <= 1 << 18
    inits = [np.asarray(s, float) for s in (starts or [])]
    if not inits:
        inits.append(np.ones(d) / math.sqrt(d))
    for r in range(len(inits), restarts):
        key = list(seed) if isinstance(seed, (tuple, list)) else [seed]
        rng = np.random.default_rng(key + [r])
        v = rng.standard_normal(d)
        inits.append(v / np.linalg.norm(v))
    best = (-1.0, None, None)
    monotone = True
    for c0 in inits[:max(restarts, len(starts or []))]:
        lam, c, trace = _alt_flip_run(F, c0, max_iter, flip)
        if any(b < a - 1e-12 * max(1.0, abs(a)) for a, b in zip(trace, trace[1:])):
            monotone = False
        if lam > best[0]:
            best = (lam, c, trace)
    lam, c, trace = best
    return _finish(grid, structure, c, lam, "local-max",
                   {"restarts": len(inits), "trace": trace, "monotone": monotone, "flip": flip}, system)


# -- permutation search --------------------------------------------------------------


def _evaluate_perm(system, sigma, restarts, seed, task, warm=None):
    st = Structure.from_permutation(sigma)
    starts = [warm] if warm is not None else None
    return alt_max_kappa(system, st, restarts=restarts, seed=(seed, task), starts=starts, flip=False)


def nu_search(n: int, system=None, strategy: str = "anneal", budget: int = 2000, seed: int = 0,
              restarts: int = 4, warm: KappaEstimate | None = None) -> KappaEstimate:
    """Search permutations sigma of 1..n for a large ratio with ``G_m = {sigma(1..m)}``.

    The result is a lower-bound certificate for kappa_n of the system.  When
    the budget runs out before the strategy finishes, ``meta['budget_exhausted']``
    is set and the best permutation so far is returned.
    """
    if system is None:
        system = classical_haar(n)
    size = len(system.indices) if isinstance(system, SignGrid) else len(system)
    if n > size:
        raise ValidationError("system has fewer than n functions")
    if strategy == "exhaustive" and n > 8:
        raise ValidationError("exhaustive search only for n <= 8")
    if n == 1:
        st = Structure.from_permutation([1])
        return KappaEstimate(1.0, (1.0,), st, "lower-bound", 0.0, {"evaluations": 0}, system)
    cache: dict = {}
    evals = 0
    exhausted = False

    def score(sigma, warm_c=None):
        nonlocal evals
        key = tuple(sigma)
        if key not in cache:
            cache[key] = _evaluate_perm(system, key, restarts, seed, evals, warm_c)
            evals += 1
        return cache[key]

    best = None
    if warm is not None:
        base = list(warm.structure.order)
        sigma0 = base + [j for j in range(1, n + 1) if j not in base]
        c0 = np.zeros(n)
        c0[: len(base)] = warm.coefficients
        best = score(sigma0, c0)
    if strategy == "exhaustive":
        for sigma in itertools.permutations(range(1, n + 1)):
            if evals >= budget:
                exhausted = True
                break
            e = score(sigma)
            if best is None or e.value > best.value:
                best = e
    elif strategy == "random":
        rng = np.random.default_rng([seed, n, 1])
        while evals < budget:
            sigma = tuple(int(x) + 1 for x in rng.permutation(n))
            e = score(sigma)
            if best is None or e.value > best.value:
                best = e
        exhausted = True
    elif strategy == "anneal":
        rng = np.random.default_rng([seed, n, 2])
        cur = best if best is not None else score(tuple(range(1, n + 1)))
        best = cur
        t0, t1 = 0.05, 1e-4
        steps = max(budget - evals, 1)
        for s in range(steps):
            if evals >= budget:
                break
            temp = t0 * (t1 / t0) ** (s / steps)
            sigma = list(cur.structure.order)
            i, j = rng.choice(n, size=2, replace=False)
            if rng.random() < 0.5:
                sigma[i], sigma[j] = sigma[j], sigma[i]
            else:
                sigma.insert(j, sigma.pop(i))
            pos = {k: c for k, c in zip(cur.structure.order, cur.coefficients)}
            e = score(sigma, np.array([pos[k] for k in sigma]))
            if e.value >= cur.value or rng.random() < math.exp((e.value - cur.value) / temp):
                cur = e
            if e.value > best.value:
                best = e
        exhausted = evals >= budget
    else:
        raise ValidationError(f"unknown strategy {strategy!r}")
    # polish the winner with more restarts, keeping its coefficients as a start
    pol = alt_max_kappa(system, best.structure, restarts=32, seed=seed, starts=[np.array(best.coefficients)])
    if pol.value > best.value:
        best = pol
    meta = dict(best.meta)
    meta.update({"evaluations": evals, "budget_exhausted": exhausted, "strategy": strategy,
                 "sigma": list(best.structure.order)})
    return KappaEstimate(best.value, best.coefficients, best.structure, "lower-bound", best.err, meta, system)


def nu_ladder(ns: Sequence[int], system_for=None, budget: int = 1500, seed: int = 0, restarts: int = 4):
    """Certificates for increasing n, each warm-started from the previous winner."""
    out = []
    prev = None
    for n in ns:
        system = system_for(n) if system_for else classical_haar(n)
        strategy = "exhaustive" if n <= 4 else "anneal"
        e = nu_search(n, system, strategy, budget, seed, restarts, warm=prev)
        out.append(e)
        prev = e
    return out


# -- growth models ------------------------------------------------------------------


GROWTH_MODELS = {
    "constant": None,
    "sqrt_log": lambda n: math.sqrt(math.log2(n)),
    "log": lambda n: math.log2(n),
}


@dataclass
class GrowthReport:
    coefficients: dict  # model -> (intercept, slope)
    residuals: dict  # residual standard error, sqrt(RSS / (points - parameters))
    ranking: list  # model names, best first; ties go to the simpler model

    @property
    def best(self) -> str:
        return self.ranking[0]


def growth_fit(points: Sequence[tuple]) -> GrowthReport:
    """Least-squares fits ``kappa ~ a + b g(n)`` for g in the growth models.

    The constant model is the intercept alone.  Models are ranked by residual
    standard error so the extra slope parameter is paid for.
    """
    pts = [(int(n), float(k)) for n, k in points]
    if len(pts) < 3:
        raise ValidationError("need at least 3 points")
    ns = [n for n, _ in pts]
    if len(set(ns)) == 1:
        raise ValidationError("all points share the same n")
    if any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
        raise ValidationError("n must be positive and increasing")
    y = np.array([k for _, k in pts])
    N = len(y)
    coef, res = {}, {}
    for name, g in GROWTH_MODELS.items():
        if g is None:
            A = np.ones((N, 1))
        else:
            A = np.column_stack([np.ones(N), [g(n) for n in ns]])
        sol, *_ = np.linalg.lstsq(A, y, rcond=None)
        r = y - A @ sol
        coef[name] = (float(sol[0]), float(sol[1]) if len(sol) > 1 else 0.0)
        res[name] = float(np.sqrt(r @ r / (N - A.shape[1])))
    names = list(GROWTH_MODELS)
    scale = max(float(np.max(np.abs(y))), 1.0)
    ranking = sorted(names, key=lambda k: (round(res[k] / scale, 12), names.index(k)))
    return GrowthReport(coef, res, ranking)


# -- transfer to another complete system --------------------------------------------


def transfer_kappa_lower(target: OrthoSystem, n: int, eps, source: KappaEstimate | None = None,
                         n_schedule=None, budget: int = 1500, seed: int = 0) -> KappaEstimate:
    """Carry a Haar certificate to ``target`` through the Lemma-1 construction.

    The Haar functions ``h_sigma(1..n)`` are approximated, after a measure
    preserving change of variables, by non-overlapping ``target`` polynomials
    ``P_k`` with ``||h~_k - P_k|| < eps``.  The monotone family
    ``sum_{k<=m} a_k P_k`` is then a family of ``target`` and its ratio is
    evaluated exactly.
    """
    from fractions import Fraction

    from .lemma1 import lemma1_run

    if n == 1:
        st = Structure.from_permutation([1])
        return KappaEstimate(1.0, (1.0,), st, "lower-bound", 0.0, {"delta_bound": 0.0}, target)
    haar = classical_haar(n)
    if source is None:
        source = nu_search(n, haar, "exhaustive" if n <= 4 else "anneal", budget, seed)
    sigma = list(source.structure.order)
    coeffs = list(source.coefficients)
    # F restricted to the certificate's functions, in certificate order, is still an MD
    # along the original filtration only in index order, so run Lemma 1 on h_1..h_n and
    # then pick the polynomials by sigma.
    eps = Fraction(eps)
    _, fam, report = lemma1_run(haar, target, [eps] * n, n, n_schedule)
    order: list = []
    sizes = []
    cmap: dict = {}
    for k, a in zip(sigma, coeffs):
        window = fam.groups[k - 1]
        for j, c in window.items():
            cmap[j] = c * Fraction(a)
        order.extend(sorted(window))
        sizes.append(len(order))
    family = MonotoneFamily.from_structure(target, order, sizes, cmap)
    kr = kappa_ratio(family)
    l1 = sum(abs(float(a)) for a in coeffs)
    l2 = math.sqrt(sum(float(a) ** 2 for a in coeffs))
    # ||max_m |p~_m| - max_m |p_m| ||_2 <= eps * sum |a_k|, and the same for the denominators
    e = float(eps) * l1 / l2
    delta = (source.value + 1) * e / (1 - e) if e < 1 else float("inf")
    meta = {"source_value": source.value, "delta_bound": delta, "sigma": sigma,
            "certified": kr.value + kr.err >= source.value - delta - source.err,
            "errors_sq": [float(s.error_sq) for s in report.steps],
            "windows": [list(w) for w in report.windows]}
    return KappaEstimate(kr.value, tuple(float(cmap[j]) for j in order), Structure(tuple(order), tuple(sizes)),
                         "lower-bound", kr.err, meta, target)
