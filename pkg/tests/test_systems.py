from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdkappa.errors import ValidationError
from mdkappa.mp import Partition, eta_map, u_partition_map
from mdkappa.pcf import PCF, integrate, lp_norm
from mdkappa.radical import RadScalar
from mdkappa.sets import simple_set
from mdkappa.systems import (
    NonOverlapFamily,
    OrthoSystem,
    SplitTree,
    classical_haar,
    expand,
    generalized_haar,
    gram_matrix,
    quadruple_check,
    rademacher,
    reconstruct,
    transformed_system,
    verify_md,
)

SQ2 = RadScalar.sqrt_of(2)


def is_identity(G):
    return all(G[i][j] == (1 if i == j else 0) for i in range(len(G)) for j in range(len(G)))


# -- classical Haar ------------------------------------------------------------------


def test_classical_haar_examples():
    H = classical_haar(8)
    assert H[1] == PCF.constant(1)
    assert H[2] == PCF([0, F(1, 2)], [1, -1])
    assert H[3] == PCF([0, F(1, 4), F(1, 2)], [SQ2, -SQ2, 0])
    assert integrate(H[5] * H[6]) == 0


@pytest.mark.parametrize("j", range(0, 5))
def test_classical_haar_indexing(j):
    H = classical_haar(64)
    for i in range(1, 2**j + 1):
        h = H[2**j + i]
        lo, hi = F(i - 1, 2**j), F(i, 2**j)
        amp = RadScalar.sqrt_of(2**j)
        assert h((lo + hi) / 2 - F(1, 2**(j + 3))) == amp
        assert h((lo + hi) / 2) == -amp
        assert h.support().pairs() == [(lo, hi)]


# -- generalized Haar ---------------------------------------------------------------


def test_generalized_root_midpoint_is_h2():
    assert generalized_haar(SplitTree.midpoint(1))[2] == classical_haar(2)[2]


def test_generalized_root_third():
    g = generalized_haar(SplitTree([F(1, 3)]))[2]
    assert g == PCF([0, F(1, 3)], [SQ2, -SQ2 / 2])
    assert integrate(g) == 0 and lp_norm(g, 2).exact_sq == 1


def test_split_tree_rejects_bad_splits():
    with pytest.raises(ValidationError):
        SplitTree([F(1, 2), F(1, 2), F(3, 4)])
    with pytest.raises(ValidationError):
        SplitTree([F(1, 2), F(1, 4)])


@given(st.integers(1, 4), st.integers(0, 10**6), st.data())
def test_signed_generalized_haar_orthonormal(depth, seed, data):
    signs = data.draw(st.lists(st.sampled_from([1, -1]), min_size=2**depth - 1, max_size=2**depth - 1))
    S = generalized_haar(SplitTree.random(depth, seed, signs=signs))
    assert is_identity(gram_matrix(S))


@given(st.integers(1, 5))
def test_midpoint_tree_is_classical(depth):
    assert generalized_haar(SplitTree.midpoint(depth)).functions == classical_haar(2**depth).functions


def test_max_leaf_lengths_recorded():
    t = SplitTree.ratio(4, F(1, 4))
    assert t.max_leaf_lengths() == [F(3, 4) ** d for d in range(1, 5)]


# -- Rademacher -----------------------------------------------------------------------


def test_rademacher_examples():
    R = rademacher(5)
    assert R[1] == PCF([0, F(1, 2)], [1, -1])
    assert integrate(R[1] * R[2]) == 0
    assert all(lp_norm(R[k], 2).exact_sq == 1 for k in range(1, 6))
    assert is_identity(gram_matrix(R))


# -- verification -------------------------------------------------------------------------


def test_verify_md_classical():
    rep = verify_md(classical_haar(16))
    assert rep.ok and rep.checked_gram and rep.checked_completeness


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_verify_md_random_tree_depth5(seed):
    rep = verify_md(generalized_haar(SplitTree.random(5, seed)))
    assert rep.ok and rep.checked_completeness


def test_verify_md_rademacher():
    assert verify_md(rademacher(6)).ok


def test_verify_md_negative_control():
    H = classical_haar(8)
    h3 = H[3]
    flipped = PCF([0, F(1, 4), F(1, 2)], [-h3(0), h3(F(1, 4)), 0])
    rep = verify_md(H.replace(3, flipped))
    assert not rep.ok
    n, block, mean = rep.mean_zero_failures[0]
    assert n == 3 and block == simple_set([(0, F(1, 2))]) and mean == -SQ2 / 2


def test_pullback_system_md_under_own_filtration():
    H = classical_haar(16)
    T = transformed_system(H, eta_map(3))
    assert verify_md(T, completeness=False).ok


def test_pullback_system_md_against_original_filtration():
    H = classical_haar(8)
    # u_{A,n} with A the finest level maps each atom to itself
    tau = u_partition_map(H.filtration.level(8), 2)
    same = OrthoSystem(transformed_system(H, tau).functions, "md", H.filtration)
    assert verify_md(same, completeness=False).ok
    shuffled = OrthoSystem(transformed_system(H, eta_map(2)).functions, "md", H.filtration)
    assert not verify_md(shuffled, completeness=False).ok


# -- expansion -----------------------------------------------------------------------


def test_expand_examples():
    H = classical_haar(8)
    ex = expand(H[3], H)
    assert ex.coeffs == [0, 0, 1, 0, 0, 0, 0, 0]
    ex = expand(PCF.indicator(simple_set([(0, F(1, 2))])), classical_haar(2))
    assert ex.coeffs == [F(1, 2), F(1, 2)] and ex.residual == 0
    ex = expand(PCF.indicator(simple_set([(F(3, 8), F(1, 2))])), H)
    assert ex.residual == 0
    assert sum(1 for c in ex.coeffs if c) <= 4


@given(st.lists(st.integers(-3, 3), min_size=8, max_size=8), st.integers(0, 100))
def test_expand_reconstruct_identity(cs, seed):
    S = generalized_haar(SplitTree.random(3, seed))
    f = reconstruct([F(c) for c in cs], S)
    ex = expand(f, S)
    assert ex.coeffs == [F(c) for c in cs] and ex.residual == 0


def test_expand_without_nodes_matches_tree_path():
    S = generalized_haar(SplitTree.random(3, 4))
    plain = OrthoSystem(S.functions, "custom")
    f = PCF([0, F(1, 5), F(2, 3)], [1, -2, F(1, 2)])
    assert expand(f, S).coeffs == expand(f, plain).coeffs


# -- quadruples ---------------------------------------------------------------------------


def test_quadruple_disjoint_single_haar():
    H = classical_haar(16)
    rep = quadruple_check(NonOverlapFamily.singletons([2, 5, 9, 12]), H, trials=5)
    assert rep.ok


def test_quadruple_random_family():
    H = classical_haar(64)
    fam = NonOverlapFamily.random(12, 64, seed=3)
    assert quadruple_check(fam, H, trials=40, seed=1).ok


def test_quadruple_overlap_rejected_and_negative_control():
    H = classical_haar(4)
    fam = NonOverlapFamily([{2: 1}, {2: 1}, {1: 1}, {1: 1}], require_disjoint=False)
    with pytest.raises(ValidationError):
        quadruple_check(fam, H, trials=1)
    rep = quadruple_check(fam, H, trials=1, require_disjoint=False)
    assert not rep.ok and rep.nonzero[0][1] == 1


def test_non_overlap_norms():
    fam = NonOverlapFamily([{2: 3, 5: 4}, {7: F(1, 2)}])
    H = classical_haar(8)
    assert fam.norms_sq() == [25, F(1, 4)]
    assert [lp_norm(p, 2).exact_sq for p in fam.polynomials(H)] == [25, F(1, 4)]
    with pytest.raises(ValidationError):
        NonOverlapFamily([{1: 1}, {1: 2}])
