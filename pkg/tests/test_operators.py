import math
import random
from fractions import Fraction as F
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdkappa.errors import DomainError, ValidationError
from mdkappa.operators import (
    GoodLambdaRow,
    GoodLambdaTable,
    MonotoneFamily,
    cww_eps,
    cww_exponent_fit,
    good_lambda_scan,
    kappa_ratio,
    maximal_fn,
    mr_ratio_check,
    pstar,
    random_polynomial,
    square_fn,
)
from mdkappa.pcf import PCF, lp_norm
from mdkappa.radical import RadScalar
from mdkappa.systems import classical_haar, rademacher

FIX = Path(__file__).parent / "fixtures"
H = classical_haar(64)


def grid(f, level=7):
    return np.array([float(f(F(k, 1 << level))) for k in range(1 << level)])


def brute_maximal(coeffs, system, level=7):
    acc = np.zeros(1 << level)
    best = np.zeros(1 << level)
    for k in sorted(coeffs):
        acc = acc + float(coeffs[k]) * grid(system[k], level)
        best = np.maximum(best, np.abs(acc))
    return best


@st.composite
def haar_coeffs(draw, max_index=32):
    ks = draw(st.sets(st.integers(1, max_index), min_size=1, max_size=8))
    return {k: F(draw(st.integers(-3, 3).filter(bool)), draw(st.integers(1, 2))) for k in ks}


@st.composite
def families(draw, max_index=32):
    order = draw(st.permutations(range(1, max_index + 1)))[: draw(st.integers(1, 10))]
    n = draw(st.integers(1, 5))
    sizes = sorted(draw(st.lists(st.integers(0, len(order)), min_size=n - 1, max_size=n - 1))) + [len(order)]
    cs = [F(draw(st.integers(-4, 4).filter(bool)), draw(st.integers(1, 3))) for _ in order]
    return MonotoneFamily.from_structure(H, order, sizes, cs)


# -- maximal and square functions -------------------------------------------------------------


def test_maximal_examples():
    assert maximal_fn([1, 1], H) == PCF([0, F(1, 2)], [2, 1])
    assert maximal_fn({1: 1}, H) == PCF.constant(1)


def test_maximal_dominates_f_on_random_polynomials():
    rng = random.Random(0)
    for _ in range(100):
        cs = {k: F(rng.choice([-2, -1, 1, 2])) for k in rng.sample(range(1, 65), rng.randint(1, 10))}
        M = maximal_fn(cs, H)
        f = H.polynomial(cs)
        assert all(m >= abs(v) for m, v in zip(*_aligned(M, f)))


def _aligned(*fs):
    from mdkappa.pcf import align

    return align(list(fs))[1]


@given(haar_coeffs())
def test_maximal_matches_brute_force(cs):
    assert np.allclose(grid(maximal_fn(cs, H)), brute_maximal(cs, H), atol=1e-12)


def test_square_examples():
    assert square_fn([1, 1], H) == PCF.constant(RadScalar.sqrt_of(2))
    assert square_fn({5: -3}, H) == abs(H[5]).scale(3)


def test_square_rejects_irrational_values():
    with pytest.raises(ValidationError):
        square_fn({2: 1, 3: 1 + RadScalar.sqrt_of(2)}, H)


def test_square_norm_equals_energy_on_random_polynomials():
    rng = random.Random(1)
    for _ in range(100):
        cs = {k: F(rng.choice([-3, -1, 1, 2]), rng.choice([1, 2])) for k in rng.sample(range(1, 65), rng.randint(1, 10))}
        S = square_fn(cs, H)
        energy = sum(c * c for c in cs.values())
        assert lp_norm(S, 2).exact_sq == energy
        assert lp_norm(H.polynomial(cs), 2).exact_sq == energy


# -- families, p*, kappa ------------------------------------------------------------------


def test_pstar_examples():
    fam = MonotoneFamily(H, [[1], [1, 2]], {1: 1, 2: 1})
    assert pstar(fam) == PCF([0, F(1, 2)], [2, 1])
    one = MonotoneFamily(H, [[3, 4]], {3: 1, 4: 2})
    assert pstar(one) == abs(one.polynomials()[0])
    rep = MonotoneFamily(H, [[3], [3]], {3: 2})
    assert pstar(rep) == abs(rep.polynomials()[0])


def test_family_validation():
    with pytest.raises(ValidationError):
        MonotoneFamily(H, [[1, 2], [1]], {1: 1, 2: 1})
    with pytest.raises(DomainError):
        MonotoneFamily(H, [[1]], {1: 0})
    with pytest.raises(ValidationError):
        MonotoneFamily(H, [[1], [1, 99]], {1: 1, 99: 1})


def test_kappa_examples():
    fam = MonotoneFamily(H, [[1], [1, 2]], {1: 1, 2: 1})
    k = kappa_ratio(fam)
    assert k.num_sq == F(5, 2) and k.den_sq == 2
    assert abs(k.value - math.sqrt(5) / 2) <= k.err + 1e-16
    assert kappa_ratio(MonotoneFamily(H, [[2, 7]], {2: 1, 7: 3})).value == 1.0


@given(families())
def test_kappa_at_least_one_and_routes_agree(fam):
    exact = kappa_ratio(fam, exact=True)
    flt = kappa_ratio(fam, exact=False)
    assert exact.value >= 1 - exact.err
    assert abs(exact.value - flt.value) <= exact.err + flt.err + 1e-12


@given(families(), st.sampled_from([F(-3), F(1, 7), F(5, 2)]))
def test_kappa_scale_invariant(fam, lam):
    a, b = kappa_ratio(fam, exact=True), kappa_ratio(fam.scaled(lam), exact=True)
    assert a.num_sq * b.den_sq == b.num_sq * a.den_sq


@given(families())
def test_square_functions_nested(fam):
    ps = [fam.groups()[m] for m in range(fam.n)]
    Ss = [square_fn({j: fam.coeffs[j] for j in g} or {1: 0}, H) for g in ps]
    for Sa, Sb in zip(Ss, Ss[1:]):
        va, vb = _aligned(Sa, Sb)
        assert all(x <= y for x, y in zip(va, vb))


@given(families())
def test_pstar_dominates_last(fam):
    P, last = _aligned(pstar(fam), fam.polynomials()[-1])
    assert all(a >= abs(b) for a, b in zip(P, last))


# -- good lambda -------------------------------------------------------------------------


def test_good_lambda_constant():
    t = good_lambda_scan({1: 1}, H, [F(1, 2)], [F(1, 4)])
    r = t.rows[0]
    assert (r.lhs, r.rhs, r.ratio) == (0, 1, 0)


def test_good_lambda_rhs_zero_flagged():
    t = good_lambda_scan({1: 1}, H, [F(4)], [F(1)])
    assert t.rows[0].flagged and t.rows[0].ratio is None


def test_good_lambda_monotone_in_eps_and_lambda():
    rng = random.Random(2)
    cs = {k: F(rng.choice([-1, 1])) for k in range(1, 65)}
    eps = [F(k, 8) for k in range(1, 25)]
    lams = [F(k, 2) for k in range(1, 9)]
    t = good_lambda_scan(cs, H, lams, eps)
    by = t.by_lambda()
    for lam, rows in by.items():
        lhs = [r.lhs for r in rows]
        assert lhs == sorted(lhs)
        assert all(r.lhs <= r.mid <= r.rhs for r in rows)
    mids = [by[lam][0].mid for lam in lams]
    rhss = [by[lam][0].rhs for lam in lams]
    assert mids == sorted(mids, reverse=True) and rhss == sorted(rhss, reverse=True)


def test_good_lambda_lhs_not_monotone_in_lambda():
    # raising lambda shrinks {Mf > lambda} but enlarges {Sf < eps lambda}
    t = good_lambda_scan({1: 1, 2: 1}, H, [F(1), F(3, 2)], [F(1)])
    assert [r.lhs for r in t.rows] == [0, F(1, 2)]


def test_good_lambda_fixture_regression():
    cs = random_polynomial(256, 64, seed=0)
    H256 = classical_haar(256)
    norm = lp_norm(H256.polynomial(cs), 2).exact_sq.sqrt()
    t = good_lambda_scan(cs, H256, [norm], [F(1, 4), F(1, 2), F(3, 4), F(1), F(3, 2), F(2), F(3)])
    assert t.to_csv() == (FIX / "goodlambda_seed0.csv").read_text()


def test_cww_fit_synthetic():
    rows = [GoodLambdaRow(1, F(e, 4), None, None, math.exp(-3 / (e / 4) ** 2)) for e in range(2, 9)]
    fit = cww_exponent_fit(GoodLambdaTable(rows))
    assert fit.defined and abs(fit.c_fit - 3) <= 1e-9
    flat = [GoodLambdaRow(1, F(e, 4), None, None, 0.25) for e in range(2, 9)]
    assert cww_exponent_fit(GoodLambdaTable(flat)).c_fit == pytest.approx(0, abs=1e-12)


def test_cww_fit_undefined():
    rows = [GoodLambdaRow(1, F(e, 4), 0, 1, F(0)) for e in range(2, 9)]
    fit = cww_exponent_fit(GoodLambdaTable(rows))
    assert not fit.defined and fit.c_fit is None


def test_cww_eps():
    assert cww_eps(16) == pytest.approx(math.sqrt(1 / math.log(16)))
    assert cww_eps(16, 4) == pytest.approx(2 * cww_eps(16))
    with pytest.raises(DomainError):
        cww_eps(1)


# -- ratio report --------------------------------------------------------------------------


def test_mr_rademacher_n8():
    R = rademacher(8)
    fam = MonotoneFamily(R, [list(range(1, m + 1)) for m in range(1, 9)], {j: 1 for j in range(1, 9)})
    rep = mr_ratio_check([fam])
    assert rep.max_over_sqrt_log <= 2 and not rep.cs_violations
    # oracle: all 2^8 sign paths of the partial-sum walk are equally likely
    from itertools import product

    num = sum(max(sum(w[:m]) ** 2 for m in range(1, 9)) for w in product([1, -1], repeat=8))
    assert kappa_ratio(fam).num_sq == F(num, 256)
    assert rep.rows[0]["ratio"] == pytest.approx(math.sqrt(num / 256 / 8), abs=1e-14)


@given(families())
def test_mr_cauchy_schwarz_sanity(fam):
    rep = mr_ratio_check([fam])
    assert not rep.cs_violations
