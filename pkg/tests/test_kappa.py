import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdkappa.errors import BudgetError, ValidationError
from mdkappa.kappa import (
    Structure,
    alt_max_kappa,
    exact_kappa,
    growth_fit,
    nu_search,
    rademacher_grid,
    transfer_kappa_lower,
)
from mdkappa.systems import SplitTree, classical_haar, generalized_haar, rademacher

KAPPA2 = math.sqrt((3 + math.sqrt(5)) / 4)
H16 = classical_haar(16)


def angular_oracle_kappa2(steps=2_000_000):
    """max over the unit circle of the exact n=2 ratio for G_1={1}, G_2={1,2}."""
    t = np.linspace(0, np.pi, steps, endpoint=False)
    c1, c2 = np.cos(t), np.sin(t)
    # atoms [0,1/2) and [1/2,1): p_1 = c1, p_2 = c1 +- c2
    num = 0.5 * np.maximum(c1**2, (c1 + c2) ** 2) + 0.5 * np.maximum(c1**2, (c1 - c2) ** 2)
    return float(np.sqrt(num.max()))


def small_corpus(count, seed=0, size=16):
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        n = rng.randint(2, 4)
        d = rng.randint(n, 7)
        order = rng.sample(range(1, size + 1), d)
        sizes = sorted(rng.sample(range(1, d), n - 1)) + [d]
        out.append(Structure(tuple(order), tuple(sizes)))
    return out


# -- exact enumeration -------------------------------------------------------------


def test_exact_kappa2_against_angular_grid():
    e = exact_kappa(classical_haar(2), Structure((1, 2), (1, 2)))
    assert e.kind == "exact"
    assert abs(e.value - KAPPA2) <= 1e-9
    assert abs(angular_oracle_kappa2() - KAPPA2) <= 1e-9


def test_exact_n1_is_one():
    assert exact_kappa(H16, Structure((3, 5), (2,))).value == 1.0


def test_exact_rademacher_n2():
    st2 = Structure((1, 2), (1, 2))
    pcf_route = exact_kappa(rademacher(2), st2)
    grid_route = exact_kappa(rademacher_grid(2), st2)
    assert pcf_route.value >= 1 and abs(pcf_route.value - grid_route.value) <= 1e-12


def test_exact_budget_refusal():
    with pytest.raises(BudgetError):
        exact_kappa(H16, Structure.from_permutation(range(1, 17)), budget_bits=10)


def test_structure_validation():
    with pytest.raises(ValidationError):
        Structure((1, 1), (1, 2))
    with pytest.raises(ValidationError):
        Structure((1, 2), (2, 1))
    assert Structure.from_groups([[3], [3, 1]]).order == (3, 1)


# -- alternating maximisation ----------------------------------------------------------


def test_alt_matches_exact_on_corpus():
    for i, st_ in enumerate(small_corpus(40)):
        ex = exact_kappa(H16, st_)
        al = alt_max_kappa(H16, st_, restarts=32, seed=i)
        assert ex.value >= al.value - 1e-12
        assert abs(ex.value - al.value) <= 1e-9, st_


def test_alt_single_atom_one_step():
    # h_1 alone on one atom: every pattern gives the same form
    e = alt_max_kappa(classical_haar(1), Structure((1,), (1,)), restarts=1)
    assert e.value == pytest.approx(1.0) and len(e.meta["trace"]) == 1


def test_alt_scale_invariant_trajectory():
    st_ = small_corpus(1, seed=3)[0]
    c0 = np.linspace(1, 2, len(st_.order))
    a = alt_max_kappa(H16, st_, restarts=1, starts=[c0])
    b = alt_max_kappa(H16, st_, restarts=1, starts=[2 * c0])
    assert a.meta["trace"] == b.meta["trace"] and a.coefficients == b.coefficients


@given(st.integers(0, 10**6))
@settings(max_examples=25)
def test_alt_objective_monotone_and_reevaluates(seed):
    st_ = small_corpus(1, seed=seed)[0]
    e = alt_max_kappa(H16, st_, restarts=4, seed=seed)
    assert e.meta["monotone"]
    assert e.value >= 1 - 1e-12
    assert abs(e.reevaluate().value - e.value) <= 1e-9


def test_permutation_symmetry_disjoint_supports():
    H4 = classical_haar(4)
    a = exact_kappa(H4, Structure.from_permutation([3, 4]))
    b = exact_kappa(H4, Structure.from_permutation([4, 3]))
    assert abs(a.value - b.value) <= 1e-12


# -- permutation search ------------------------------------------------------------------


def test_nu_n2_exhaustive():
    e = nu_search(2, strategy="exhaustive")
    best = max(exact_kappa(classical_haar(2), Structure.from_permutation(s)).value for s in ([1, 2], [2, 1]))
    assert e.kind == "lower-bound" and abs(e.value - best) <= 1e-9 and abs(e.value - KAPPA2) <= 1e-9


def test_identity_unit_vector_ratio_one():
    fam_st = Structure.from_permutation([1, 2, 3, 4])
    from mdkappa.operators import MonotoneFamily, kappa_ratio

    fam = MonotoneFamily.from_structure(classical_haar(4), fam_st.order, fam_st.sizes, [0, 0, 0, 1])
    assert kappa_ratio(fam).value == 1.0


def test_nu_increasing_4_8_16():
    vals = [nu_search(n, strategy="exhaustive" if n <= 4 else "anneal", budget=400, seed=0).value for n in (4, 8, 16)]
    assert vals[0] < vals[1] < vals[2]


def test_nu_n16_regression_fixture():
    e = nu_search(16, strategy="anneal", budget=400, seed=0)
    assert e.value == pytest.approx(1.460189370329969, abs=1e-9)
    assert abs(e.reevaluate().value - e.value) <= 1e-9


def test_nu_budget_flag_and_strategy_errors():
    e = nu_search(6, strategy="exhaustive", budget=5)
    assert e.meta["budget_exhausted"] and e.meta["evaluations"] == 5
    with pytest.raises(ValidationError):
        nu_search(9, strategy="exhaustive")
    with pytest.raises(ValidationError):
        nu_search(4, strategy="bogus")


def test_certificate_json_has_witness():
    d = nu_search(4, strategy="exhaustive").to_json()
    assert d["kind"] == "lower-bound" and len(d["coefficients"]) == 4 and sorted(d["structure"]["order"]) == [1, 2, 3, 4]


# -- growth fits ---------------------------------------------------------------------------


def test_growth_sqrt_log_recovery():
    pts = [(n, 2 * math.sqrt(math.log2(n))) for n in (2, 4, 8, 16, 32)]
    r = growth_fit(pts)
    assert r.best == "sqrt_log"
    a, b = r.coefficients["sqrt_log"]
    assert abs(b - 2) <= 1e-9 and abs(a) <= 1e-9


def test_growth_constant_recovery():
    assert growth_fit([(n, 1.0) for n in (2, 4, 8, 16)]).best == "constant"


def test_growth_errors():
    with pytest.raises(ValidationError):
        growth_fit([(2, 1.0), (4, 1.1)])
    with pytest.raises(ValidationError):
        growth_fit([(4, 1.0), (4, 1.1), (4, 1.2)])


def test_growth_on_nu_certificates():
    vals = [(n, nu_search(n, strategy="exhaustive" if n <= 4 else "anneal", budget=300, seed=1).value)
            for n in (2, 4, 8, 16)]
    r = growth_fit(vals)
    assert r.residuals["sqrt_log"] <= r.residuals["log"]


# -- transfer ------------------------------------------------------------------------------------


def test_transfer_self_n4():
    src = nu_search(4, strategy="exhaustive")
    e = transfer_kappa_lower(classical_haar(64), 4, "1/1024", source=src)
    assert abs(e.value - src.value) <= 1e-2 and e.meta["certified"]


def test_transfer_n1():
    assert transfer_kappa_lower(classical_haar(4), 1, "1/4").value == 1.0


def test_transfer_unbalanced_target_increasing():
    vals = []
    for n, depth in ((2, 9), (4, 9), (8, 11)):
        target = generalized_haar(SplitTree.dyadic_skew(depth))
        e = transfer_kappa_lower(target, n, "1/1024", budget=300)
        assert e.value >= 1 and e.meta["certified"]
        vals.append(e.value)
    assert vals[0] < vals[1] < vals[2]
