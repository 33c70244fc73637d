import math
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import intervals, pcfs
from mdkappa.errors import PrecisionError, ValidationError
from mdkappa.pcf import PCF, integrate, lp_norm, pcf_arith, super_level_measure
from mdkappa.radical import RadScalar, precision
from mdkappa.sets import Interval, SimpleSet, measure, simple_set
from mdkappa.systems import classical_haar

H = classical_haar(16)


def grid_values(f, level=10):
    """Float values of f at the left points of the dyadic grid of mesh 2^-level."""
    return [float(f(F(k, 1 << level))) for k in range(1 << level)]


# -- simple sets ---------------------------------------------------------------


def test_simple_set_merges_adjacent():
    assert simple_set([(0, F(1, 2)), (F(1, 2), F(3, 4))]).pairs() == [(0, F(3, 4))]


def test_simple_set_sorts():
    assert simple_set([(F(1, 2), 1), (0, F(1, 4))]).pairs() == [(0, F(1, 4)), (F(1, 2), 1)]


def test_simple_set_overlap_union():
    assert simple_set([(0, F(1, 3)), (F(1, 4), F(1, 2))]).pairs() == [(0, F(1, 2))]


@pytest.mark.parametrize("bad", [[(F(1, 2), F(1, 2))], [(F(3, 4), F(1, 4))], [(F(-1, 4), F(1, 2))], [(0, F(5, 4))]])
def test_simple_set_rejects_bad_intervals(bad):
    with pytest.raises(ValidationError):
        simple_set(bad)


def test_interval_is_half_open():
    iv = Interval(F(1, 4), F(1, 2))
    assert F(1, 4) in iv and F(1, 2) not in iv


@pytest.mark.parametrize(
    "pairs,expected",
    [([(0, F(1, 4)), (F(1, 2), F(3, 4))], F(1, 2)), ([], F(0)), ([(0, 1)], F(1))],
)
def test_measure_examples(pairs, expected):
    assert measure(simple_set(pairs)) == expected


@given(intervals(), intervals())
def test_measure_inclusion_exclusion(a, b):
    A, B = simple_set(a), simple_set(b)
    assert measure(A.union(B)) + measure(A.intersection(B)) == measure(A) + measure(B)


@given(intervals())
def test_set_canonicalization_idempotent(a):
    A = simple_set(a)
    assert simple_set(A.pairs()) == A
    assert 0 <= measure(A) <= 1


@given(intervals())
def test_complement_measure(a):
    A = simple_set(a)
    assert measure(A.complement()) == 1 - measure(A)
    assert A.intersection(A.complement()).is_empty()


# -- PCF arithmetic ------------------------------------------------------------


def test_add_haar_pointwise():
    s = pcf_arith(H[1], H[2], "add")
    assert s(F(1, 4)) == 2 and s(F(3, 4)) == 0


def test_abs_h2_is_one():
    assert pcf_arith(H[2], None, "abs") == PCF.constant(1)


def test_max_of_partial_sums():
    m = pcf_arith(abs(H[1]), abs(H[1] + H[2]), "max")
    assert m == PCF([0, F(1, 2)], [2, 1])
    # pointwise oracle on the dyadic grid
    brute = [max(abs(a), abs(a + b)) for a, b in zip(grid_values(H[1]), grid_values(H[2]))]
    assert grid_values(m) == brute


def test_pcf_value_at_breakpoint_belongs_to_right_piece():
    assert H[2](F(1, 2)) == -1
    assert H[2](F(0)) == 1


@given(pcfs(), pcfs())
def test_pcf_ops_match_pointwise_floats(f, g):
    for op, fn in [("add", lambda a, b: a + b), ("sub", lambda a, b: a - b), ("mul", lambda a, b: a * b),
                   ("max", max), ("min", min)]:
        h = pcf_arith(f, g, op)
        for a, b, c in zip(grid_values(f, 5), grid_values(g, 5), grid_values(h, 5)):
            assert c == pytest.approx(fn(a, b), abs=1e-12)


@given(pcfs())
def test_pcf_canonicalization_idempotent(f):
    assert PCF(f.breaks, f.values) == f
    assert all(a != b for a, b in zip(f.values, f.values[1:]))


# -- integration and norms -------------------------------------------------------


def test_integrate_examples():
    assert integrate(H[2]) == 0
    assert integrate(H[2], simple_set([(0, F(1, 2))])) == F(1, 2)
    v = integrate(H[3], simple_set([(0, F(1, 4))]))
    assert v == RadScalar.sqrt_of(2) / 4
    # float quadrature oracle
    assert float(v) == pytest.approx(sum(grid_values(H[3], 12)[: 1 << 10]) / (1 << 12), abs=1e-12)


@pytest.mark.parametrize("k", range(1, 17))
def test_haar_unit_norm(k):
    n = lp_norm(H[k], 2)
    assert n.exact_sq == 1 and n.value == 1.0


def test_norm_of_sum():
    n = lp_norm(H[1] + H[2], 2)
    assert n.exact_sq == 2
    assert abs(n.value - math.sqrt(2)) <= n.err + 1e-16


def test_norm_of_maximal_partial_sum():
    m = pcf_arith(abs(H[1]), abs(H[1] + H[2]), "max")
    assert lp_norm(m, 2).exact_sq == F(5, 2)
    brute = sum(v * v for v in grid_values(m)) / (1 << 10)
    assert brute == pytest.approx(2.5)


def test_lp_norm_other_exponents():
    f = H[1] + H[2]
    assert lp_norm(f, 1).value == pytest.approx(1.0)
    assert lp_norm(f, math.inf).value == 2.0
    assert lp_norm(f, 4).value == pytest.approx((0.5 * 16) ** 0.25)


@given(pcfs(), pcfs())
def test_integral_linear_and_norm_identity(f, g):
    assert integrate(f + g) == integrate(f) + integrate(g)
    assert lp_norm(f, 2).exact_sq == integrate(f * f)


# -- level sets ----------------------------------------------------------------------


def test_super_level_examples():
    assert super_level_measure(H[2], 0) == F(1, 2)
    assert super_level_measure(H[1] + H[2], F(3, 2)) == F(1, 2)
    assert super_level_measure(H[2], 1) == 0
    assert super_level_measure(H[2], 1, strict=False) == F(1, 2)


@given(pcfs())
def test_super_level_monotone_and_right_continuous(f):
    probes = sorted({v + d for v in f.values for d in (F(-1, 97), 0, F(1, 97))})
    ms = [super_level_measure(f, lam) for lam in probes]
    assert all(a >= b for a, b in zip(ms, ms[1:]))
    for v in set(f.values):
        # {f > lam} at lam = v equals the limit from the right
        assert super_level_measure(f, v) == super_level_measure(f, v + F(1, 10**9))


# -- radical scalars -------------------------------------------------------------


@st.composite
def rads(draw):
    x = RadScalar(0)
    for _ in range(draw(st.integers(0, 3))):
        r = F(draw(st.integers(-5, 5)), draw(st.integers(1, 4)))
        x = x + RadScalar(r) * RadScalar.sqrt_of(draw(st.sampled_from([1, 2, 3, 5, 6, 7, 10])))
    return x


@given(rads(), rads(), rads())
def test_rad_associative_and_distributive(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c


@given(rads())
def test_rad_sign_antisymmetric(a):
    if not a.is_zero():
        assert a.sign() * (-a).sign() == -1
    assert a.sign() == (0 if float(a) == 0 else (1 if float(a) > 0 else -1)) or abs(float(a)) < 1e-12


@given(rads())
def test_rad_square_keys_are_products(a):
    keys = a.keys
    allowed = set().union(*[RadScalar.sqrt_of(p * q).keys for p in keys for q in keys])
    assert (a * a).keys <= allowed


def test_rad_sign_of_near_cancellation():
    # sqrt(2) + sqrt(3) - sqrt(5 + 2 sqrt(6)) = 0 exactly, written as a nonzero-looking sum
    x = RadScalar.sqrt_of(2) + RadScalar.sqrt_of(3)
    assert (x * x - 5 - 2 * RadScalar.sqrt_of(6)).is_zero()
    # 99 sqrt(2) vs 70 sqrt(2)+... a close pair: 99/70 against sqrt(2)
    d = RadScalar(F(99, 70)) - RadScalar.sqrt_of(2)
    assert d.sign() == 1


def _pell(steps):
    x, y = 3, 2
    for _ in range(steps):
        x, y = 3 * x + 4 * y, 2 * x + 3 * y
    return x, y


def test_rad_sign_undecidable_is_surfaced_or_exact():
    # x/y - sqrt(2) is about 1/(2 sqrt(2) y^2), far below double and 64-bit resolution
    x, y = _pell(25)
    d = RadScalar(F(x, y)) - RadScalar.sqrt_of(2)
    with precision(64, symbolic=False):
        with pytest.raises(PrecisionError):
            d.sign()
    with precision(64, symbolic=True):
        assert d.sign() == 1
    with precision(256, symbolic=False):
        assert d.sign() == 1 and (-d).sign() == -1
