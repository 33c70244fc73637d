from fractions import Fraction as F

import pytest

from mdkappa.errors import LemmaFailure, PreconditionError
from mdkappa.lemma1 import (
    Lemma1State,
    constancy_partition,
    default_eps,
    default_schedule,
    lemma1_run,
    lemma1_step,
    random_probes,
    transformation_check,
)
from mdkappa.mp import (
    Partition,
    check_measure_preserving,
    dyadic_probes,
    eta_map,
    identity_map,
    pullback,
    u_partition_map,
)
from mdkappa.pcf import PCF, inner
from mdkappa.sets import simple_set
from mdkappa.systems import SplitTree, classical_haar, expand, generalized_haar, transformed_system

H = classical_haar(16)
PHI = classical_haar(1 << 12)
THIRDS = generalized_haar(SplitTree.ratio(4, F(1, 3)))


def quarters():
    return [simple_set([(F(k, 4), F(k + 1, 4))]) for k in range(4)]


# -- constancy partition -------------------------------------------------------------------


def test_constancy_examples():
    assert constancy_partition([H[2]]) == Partition([simple_set([(0, F(1, 2))]), simple_set([(F(1, 2), 1)])])
    assert constancy_partition([H[2], pullback(H[2], eta_map(2))]) == Partition(quarters())
    assert constancy_partition([PCF.constant(1)]) == Partition.trivial()


def test_constancy_groups_by_joint_value():
    # h_2^2 = 1 everywhere, h_4 is 0 on [0,1/2): the joint value (1, 0) covers one block
    f = H[2] * H[2]
    P = constancy_partition([f, H[4]])
    assert len(P) == 3 and simple_set([(0, F(1, 2))]) in P.blocks


def test_defaults():
    assert default_schedule(3) == [1, 2, 4, 8]
    assert default_eps(3) == [F(1, 4), F(1, 8), F(1, 16)]


# -- single steps --------------------------------------------------------------------------


def test_step_self_haar_base_case():
    s = lemma1_step(Lemma1State(), H[1], H, F(1, 4))
    rec = s.records[0]
    assert s.transformed[0] == H[1] and s.polys[0] == H[1]
    assert rec.error_sq == 0 and (rec.m, rec.r) == (0, 1)


def test_step_generalized_thirds_into_classical():
    s = lemma1_step(Lemma1State(), THIRDS[1], PHI, F(1, 4))
    s = lemma1_step(s, THIRDS[2], PHI, F(1, 4))
    rec = s.records[-1]
    assert rec.n in default_schedule()
    assert rec.error_sq < F(1, 16)
    assert rec.head < F(1, 64) and rec.tail < F(1, 64)


def test_step_precondition_witness():
    s = lemma1_step(Lemma1State(), H[1], H, F(1, 4))
    s = lemma1_step(s, H[2], H, F(1, 4))
    bad = PCF.indicator(simple_set([(0, F(1, 4))]))
    with pytest.raises(PreconditionError) as exc:
        lemma1_step(s, bad, H, F(1, 4))
    assert exc.value.witness[0] == simple_set([(0, F(1, 2))])


def test_step_schedule_exhausted_reports_trace():
    s = lemma1_step(Lemma1State(), THIRDS[1], PHI, F(1, 4))
    s = lemma1_step(s, THIRDS[2], PHI, F(1, 8))
    with pytest.raises(LemmaFailure) as exc:
        lemma1_step(s, THIRDS[3], PHI, F(1, 16), n_schedule=[1, 2, 4])
    assert [n for n, _ in exc.value.trace] == [1, 2, 4]


# -- runs ------------------------------------------------------------------------------------


def test_run_k1_is_base_step():
    _, fam, rep = lemma1_run(THIRDS, PHI, K=1)
    assert rep.ok and len(rep.steps) == 1 and fam.groups == [{1: 1}]


def test_self_run_errors_exactly_zero():
    T, fam, rep = lemma1_run(H, H, K=8)
    assert rep.ok and all(s.error_sq == 0 for s in rep.steps)
    for ft, p in zip(T.functions, fam.polynomials(H)):
        assert ft == p
        assert expand(ft, H).residual == 0


def test_run_two_steps_thirds_certified():
    T, fam, rep = lemma1_run(THIRDS, PHI, K=2)
    assert rep.ok and rep.disjoint
    for s in rep.steps:
        assert s.error_sq < s.eps * s.eps
    windows = rep.windows
    assert all(a[1] <= b[0] for a, b in zip(windows, windows[1:]))
    assert check_measure_preserving(rep.tau, dyadic_probes(10)).ok


def test_run_earlier_steps_invariant():
    T, fam, rep = lemma1_run(H, H, K=6)
    # every f_k o tau_K equals the f~_k fixed at step k
    for k in range(1, 7):
        assert pullback(H[k], rep.tau) == T[k]


def test_error_certificate_formula_matches_direct():
    T, fam, rep = lemma1_run(THIRDS, PHI, K=2)
    p = fam.polynomials(PHI)[1]
    d = T[2] - p
    direct = inner(d, d)
    assert direct == rep.steps[1].error_sq


def test_correlation_decay_trend():
    # <f o u_{A,n}, phi_i> along n = 2^t is exactly 0 once n passes the resolution of phi_i
    A = constancy_partition([H[1], H[2]])
    for i in range(1, 17):
        vals = [inner(pullback(H[3], u_partition_map(A, 1 << t)), H[i]) for t in range(8)]
        assert all(v == 0 for v in vals[4:])


# -- transformation check --------------------------------------------------------------------


def test_transformation_eta2():
    probes = random_probes(H, 50, seed=1)
    rep = transformation_check(H, None, eta_map(2), probes)
    assert rep.ok and rep.checked == 50


def test_transformation_identity():
    assert transformation_check(H, H, identity_map(), random_probes(H, 10)).ok


def test_transformation_negative_control():
    T = transformed_system(H, eta_map(2))
    bad = T.replace(3, T[3].scale(2))
    probes = [((3,), (F(2),))]
    rep = transformation_check(H, bad, None, probes)
    assert not rep.ok and rep.violations[0][0] == probes[0]
