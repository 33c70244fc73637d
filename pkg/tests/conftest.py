import os
from fractions import Fraction

from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

F = Fraction


def dyadic(max_exp=6):
    return st.integers(0, max_exp).flatmap(
        lambda j: st.integers(0, (1 << j)).map(lambda k: Fraction(k, 1 << j))
    )


@st.composite
def intervals(draw, max_den=12, max_count=4):
    out = []
    for _ in range(draw(st.integers(0, max_count))):
        d = draw(st.integers(1, max_den))
        a = draw(st.integers(0, d - 1))
        b = draw(st.integers(a + 1, d))
        out.append((Fraction(a, d), Fraction(b, d)))
    return out


@st.composite
def pcfs(draw, max_den=8, max_pieces=5, radicals=True, dyadic_only=False):
    from mdkappa.pcf import PCF
    from mdkappa.radical import RadScalar

    if dyadic_only:
        d = 1 << draw(st.integers(0, max_den.bit_length() - 1))
    else:
        d = draw(st.integers(1, max_den))
    cuts = sorted(set(draw(st.lists(st.integers(1, d - 1), max_size=max_pieces))) if d > 1 else [])
    breaks = [Fraction(0)] + [Fraction(c, d) for c in cuts]
    vals = []
    for _ in breaks:
        r = Fraction(draw(st.integers(-4, 4)), draw(st.integers(1, 3)))
        v = RadScalar(r)
        if radicals and draw(st.booleans()):
            v = v + RadScalar(Fraction(draw(st.integers(-2, 2)))) * RadScalar.sqrt_of(draw(st.sampled_from([2, 3, 5])))
        vals.append(v)
    return PCF(breaks, vals)
