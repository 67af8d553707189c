"""
pytest test cases for free_obata.calculus: free difference quotients, cyclic
gradients and the exact identities they satisfy.
"""
from fractions import Fraction

from hypothesis import given, settings
import hypothesis.strategies as st
import numpy as np
import pytest

from free_obata.calculus import (
    Gradient,
    Leg,
    coassociativity_defect,
    conjugates_from_cyclic,
    cyclic_grad,
    fdq,
    gradient,
    identity_suite,
    leibniz_defect,
    realness_defect,
    schwarz_defect,
    second_fdq_left,
    second_fdq_right,
    tensor_fdq,
    voiculescu_commutator,
)
from free_obata.ncpoly import (
    IndexOutOfRange,
    NcPoly,
    TensorPoly2,
    TensorPoly3,
    parse_poly,
    parse_tensor,
    random_poly,
    random_self_adjoint,
)

SEEDS = st.integers(min_value=0, max_value=2 ** 32 - 1)

GENERATOR_COUNTS = st.integers(min_value=1, max_value=3)


def test_fdq_example():
    """d_1(X1X2X1) = 1 (x) X2X1 + X1X2 (x) 1"""
    p = parse_poly("X1*X2*X1", 2)
    assert fdq(1, p) == parse_tensor("1 (x) X2*X1 + X1*X2 (x) 1", 2)
    assert fdq(2, p) == parse_tensor("X1 (x) X1", 2)


def test_fdq_of_generators():
    """d_i X_j = delta_ij 1 (x) 1"""
    for i in (1, 2):
        for j in (1, 2):
            expected = TensorPoly2.unit(2) if i == j else TensorPoly2.zero(2)
            assert fdq(i, NcPoly.generator(j, 2)) == expected


def test_cyclic_gradient_example():
    """D_1(X1X2X1X2) = 2 X2X1X2"""
    assert cyclic_grad(1, parse_poly("X1*X2*X1*X2", 2)) == parse_poly("2*X2*X1*X2", 2)


def test_conjugates_of_quartic_perturbation():
    """V = 1/2 sum X_j^2 + e X1X2X1X2 gives xi_1 = X1 + 2e X2X1X2"""
    potential = parse_poly("1/2*X1^2 + 1/2*X2^2 + 1/10*X1*X2*X1*X2", 2)
    xi = conjugates_from_cyclic(potential)
    assert xi[0] == parse_poly("X1 + 1/5*X2*X1*X2", 2)
    assert xi[1] == parse_poly("X2 + 1/5*X1*X2*X1", 2)


def test_conjugates_of_quadratic_form():
    """V = 1/2 <X, AX> gives xi_i = sum_j A_ij X_j"""
    potential = parse_poly("X1^2 + 1/2*X1*X2 + 1/2*X2*X1 + 3/2*X2^2", 2)
    xi = conjugates_from_cyclic(potential)
    assert xi == [parse_poly("2*X1 + X2", 2), parse_poly("X1 + 3*X2", 2)]


def test_second_order_quotient_example():
    """(d_1 (x) id) d_1 X1^2 = 1 (x) 1 (x) 1"""
    assert second_fdq_left(1, 1, parse_poly("X1^2", 1)) == TensorPoly3(1, {((), (), ()): 1})


def test_second_order_quotients_of_a_cube():
    """Both orders of (d_1 (x) id) d_1 and (id (x) d_1) d_1 on X1^3 agree"""
    p = parse_poly("X1^3", 1)
    expected = parse_tensor("1 (x) 1 (x) X1 + 1 (x) X1 (x) 1 + X1 (x) 1 (x) 1", 1, rank=3)
    assert second_fdq_left(1, 1, p) == expected
    assert second_fdq_right(1, 1, p) == expected
    assert not second_fdq_right(1, 1, parse_poly("X2", 2))


def test_tensor_fdq_acts_on_one_leg():
    """(id (x) d_2)(X1 (x) X2X1) = X1 (x) 1 (x) X1"""
    tensor = parse_tensor("X1 (x) X2*X1", 2)
    assert tensor_fdq(2, Leg.RIGHT, tensor) == parse_tensor("X1 (x) 1 (x) X1", 2, rank=3)
    assert not tensor_fdq(2, "left", tensor)


def test_index_out_of_range():
    """Quotients only exist for 1 <= i <= n"""
    with pytest.raises(IndexOutOfRange):
        fdq(3, parse_poly("X1", 2))

    with pytest.raises(IndexOutOfRange):
        cyclic_grad(0, parse_poly("X1", 2))


def test_gradient_components():
    """gradient() collects all n quotients with 1-based access"""
    grad = gradient(parse_poly("X1*X2", 2))
    assert grad[1] == parse_tensor("1 (x) X2", 2)
    assert grad[2] == parse_tensor("X1 (x) 1", 2)
    assert len(list(grad)) == 2

    with pytest.raises(ValueError):
        Gradient(2, [TensorPoly2.unit(2)])


@settings(deadline=None)
@given(SEEDS, GENERATOR_COUNTS)
def test_leibniz_rule(seed, n):
    """d_i(pq) = d_i(p) q + p d_i(q)"""
    rng = np.random.default_rng(seed)
    p = random_poly(rng, n, 5)
    q = random_poly(rng, n, 5)
    for i in range(1, n + 1):
        assert not leibniz_defect(i, p, q)


@settings(deadline=None)
@given(SEEDS, GENERATOR_COUNTS)
def test_realness(seed, n):
    """d_i(p*) = d_i(p)^dagger"""
    p = random_poly(np.random.default_rng(seed), n, 5)
    for i in range(1, n + 1):
        assert not realness_defect(i, p)


@settings(deadline=None)
@given(SEEDS, GENERATOR_COUNTS)
def test_coassociativity(seed, n):
    """(d_j (x) id) d_i = (id (x) d_i) d_j"""
    p = random_poly(np.random.default_rng(seed), n, 5)
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            assert not coassociativity_defect(i, j, p)


@settings(deadline=None)
@given(SEEDS, GENERATOR_COUNTS)
def test_commutator_of_cyclic_gradient_vanishes(seed, n):
    """sum_i [D_i V, X_i] = 0 for self-adjoint V"""
    potential = random_self_adjoint(np.random.default_rng(seed), n, 6)
    assert not voiculescu_commutator(potential)


@settings(deadline=None)
@given(SEEDS, GENERATOR_COUNTS)
def test_schwarz_symmetry(seed, n):
    """d_j D_i V = sigma(d_i D_j V)"""
    potential = random_self_adjoint(np.random.default_rng(seed), n, 6)
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            assert not schwarz_defect(i, j, potential)


def test_identity_suite_passes():
    """The suite used by the leibniz-suite task reports no failures"""
    suite = identity_suite(np.random.default_rng(3), 2, count=20, potential_count=10)
    assert suite.passed
    counts = suite.to_dict()
    assert counts["leibniz"] == {"checked": 40, "failed": 0}
    assert counts["coassociativity"] == {"checked": 80, "failed": 0}
    assert counts["commutator"] == {"checked": 10, "failed": 0}


def test_suite_result_records_failures():
    """A failing record flips passed"""
    suite = identity_suite(np.random.default_rng(0), 1, count=1, potential_count=1)
    suite.record("leibniz", False)
    assert not suite.passed
    assert suite.to_dict()["leibniz"]["failed"] == 1


def test_fdq_coefficients_are_fractions():
    """Coefficients stay exact rationals"""
    tensor = fdq(1, parse_poly("1/3*X1^2", 1))
    assert all(isinstance(coef, Fraction) for _, coef in tensor)
    assert tensor == parse_tensor("1/3*1 (x) X1 + 1/3*X1 (x) 1", 1)
