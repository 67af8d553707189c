"""
pytest test cases for free_obata.rigidity, from saturator search to the final
splitting verdict.
"""
from fractions import Fraction

from hypothesis import given, settings
import hypothesis.strategies as st
import numpy as np
import pytest

from free_obata import exact_linalg
from free_obata.ncpoly import parse_poly, random_poly, star
from free_obata.rigidity import (
    VACUOUS_VERDICT,
    NotOrthogonal,
    RankDeficient,
    affine_check,
    catalan_moments,
    change_of_variables,
    find_saturators,
    freeness_check,
    obata_report,
    orthogonal_completion,
    rational_orthogonal,
    rationalize,
    realify,
    semicircular_check,
    stein_residual,
)
from free_obata.spectral import TruncatedSpace, dirichlet_energy, energy_matrix
from free_obata.state import CovarianceModel

SEEDS = st.integers(min_value=0, max_value=2 ** 32 - 1)

VACUOUS_FORM = [[Fraction(11, 8), Fraction(1, 8)], [Fraction(1, 8), Fraction(11, 8)]]


def run_pipeline(model, degree, **kwargs):
    space = TruncatedSpace.build(model, degree)
    return obata_report(model, model.conjugates(), space, **kwargs)


def test_catalan_moments():
    """1, 0, 1, 0, 2, 0, 5, 0, 14"""
    assert catalan_moments(8) == [1, 0, 1, 0, 2, 0, 5, 0, 14]
    assert catalan_moments(1) == [1, 0]


def test_rationalize():
    """Floats snap to nearby small fractions"""
    assert rationalize(0.6) == Fraction(3, 5)
    assert rationalize(1 / 3) == Fraction(1, 3)


def test_standard_saturators_are_the_generators():
    """Eigenvalue 1 of the standard model is spanned by X1 and X2"""
    space = TruncatedSpace.build(CovarianceModel.standard(2), 3)
    saturators = find_saturators(space, space.model.conjugates())
    assert saturators.shape == (space.dimension, 2)
    expected = np.zeros((space.dimension, 2))
    expected[space.index[(1,)], 0] = 1.0
    expected[space.index[(2,)], 1] = 1.0
    assert np.allclose(saturators, expected, atol=1e-8)


def test_no_saturators_without_eigenvalue_one():
    """lambda_min(A) > 1 leaves the eigenspace empty"""
    model = CovarianceModel.from_quadratic_form(VACUOUS_FORM)
    space = TruncatedSpace.build(model, 2)
    assert find_saturators(space, model.conjugates()).shape == (space.dimension, 0)


def test_affine_check():
    """X1 + X1^2 is at distance ||X1^2 - 1|| = 1 from the affine span"""
    space = TruncatedSpace.build(CovarianceModel.standard(2), 2)
    result = affine_check(parse_poly("X1 + X1^2", 2), space)
    assert result.residual == pytest.approx(1.0, abs=1e-8)
    assert result.constant == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(result.coefficients, [1.0, 0.0])
    assert not result.affine

    assert affine_check(parse_poly("3 - 2*X2", 2), space).affine


def test_realify_splits_self_adjoint_and_skew_parts():
    """X1X2 = 1/2 (X1X2 + X2X1) + 1/2 (X1X2 - X2X1)"""
    space = TruncatedSpace.build(CovarianceModel.standard(2), 2)
    real, skew = realify(parse_poly("X1*X2", 2), space)
    assert space.polynomial([rationalize(v) for v in real]) == parse_poly(
        "1/2*X1*X2 + 1/2*X2*X1", 2
    )
    assert space.polynomial([rationalize(v) for v in skew]) == parse_poly(
        "1/2*X1*X2 - 1/2*X2*X1", 2
    )


@settings(deadline=None)
@given(SEEDS)
def test_realify_splits_the_energy(seed):
    """E(f) = E(self-adjoint part) + E(skew part)"""
    model = CovarianceModel(2, [[1, Fraction(1, 2)], [Fraction(1, 2), 1]])
    space = TruncatedSpace.build(model, 3)
    f = random_poly(np.random.default_rng(seed), 2, 3)
    energy = exact_linalg.to_array(energy_matrix(space))
    vector = np.array([float(value) for value in space.coordinates(f)])
    real, skew = realify(f, space)
    assert vector @ energy @ vector == pytest.approx(
        real @ energy @ real + skew @ energy @ skew, abs=1e-9
    )

    half = Fraction(1, 2)
    exact_real = (f + star(f)).scale(half)
    exact_skew = (f - star(f)).scale(half)
    assert dirichlet_energy(f, space) == dirichlet_energy(exact_real, space) + dirichlet_energy(
        exact_skew, space
    )


def test_orthogonal_completion():
    """u = (3/5, 4/5) completes to rows (3/5, 4/5), (-4/5, 3/5) with det +1"""
    matrix = orthogonal_completion([[0.6, 0.8]])
    assert np.allclose(matrix, [[0.6, 0.8], [-0.8, 0.6]])
    rational, exact = rational_orthogonal(matrix)
    assert exact
    assert rational == [[Fraction(3, 5), Fraction(4, 5)], [Fraction(-4, 5), Fraction(3, 5)]]


def test_orthogonal_completion_rejects_bad_directions():
    """Directions must be orthonormal and at most n of them"""
    with pytest.raises(RankDeficient):
        orthogonal_completion([[1.0, 1.0]])

    with pytest.raises(RankDeficient):
        orthogonal_completion([[1.0], [1.0]])


def test_change_of_variables():
    """A rotation of the standard family is standard with rotated conjugates"""
    model = CovarianceModel.standard(2)
    rotation = [[Fraction(3, 5), Fraction(4, 5)], [Fraction(-4, 5), Fraction(3, 5)]]
    change = change_of_variables(rotation, model, model.conjugates())
    assert change.exact
    assert change.generators[0] == parse_poly("3/5*X1 + 4/5*X2", 2)
    assert list(change.conjugates) == list(change.generators)
    assert change.covariance == [[1, 0], [0, 1]]

    with pytest.raises(NotOrthogonal):
        change_of_variables([[1, 1], [0, 1]], model, model.conjugates())


def test_semicircular_check():
    """X1 is semicircular, X1^2 - 1 has unit variance but a nonzero third moment"""
    model = CovarianceModel.standard(2)
    assert semicircular_check(parse_poly("X1", 2), model).exact_match

    check = semicircular_check(parse_poly("X1^2 - 1", 2), model, max_moment=4)
    assert check.variance == 1
    assert check.values[2] == 1
    assert not check.exact_match
    assert check.max_residual > 0


def test_freeness_check():
    """X1 and X2 are free, X1 and X1 + X2 are not"""
    model = CovarianceModel.standard(2)
    free = freeness_check(parse_poly("X1", 2), [parse_poly("X2", 2)], model, max_degree=4)
    assert free.max_residual == 0
    assert free.checked > 0

    dependent = freeness_check(
        parse_poly("X1", 2), [parse_poly("X1 + X2", 2)], model, max_degree=4
    )
    assert dependent.max_residual > 0


@settings(deadline=None)
@given(SEEDS)
def test_stein_identity_for_unit_directions(seed):
    """tau(Y g) = tau (x) tau(sum_j u_j d_j g) for Y = u . X, |u| = 1, in the standard model"""
    g = random_poly(np.random.default_rng(seed), 2, 5)
    model = CovarianceModel.standard(2)
    assert stein_residual([Fraction(3, 5), Fraction(4, 5)], g, model) == 0


def test_stein_identity_fails_for_correlated_generators():
    """With C12 = 1/2, tau(X1 X2) = 1/2 while d_1 X2 = 0"""
    model = CovarianceModel(2, [[1, Fraction(1, 2)], [Fraction(1, 2), 1]])
    assert stein_residual([1, 0], parse_poly("X2", 2), model) == Fraction(1, 2)


def test_standard_model_splits_two_free_semicirculars():
    """r = 2 and the verdict names L(F_2)"""
    report = run_pipeline(CovarianceModel.standard(2), 3, freeness_degree=4, stein_samples=5)
    assert report.passed
    assert report.rank == 2
    assert report.orthogonal_exact
    assert report.verdict == "splits off L(F_2) factor (numerically certified at degree 3)"
    assert all(check.exact_match for check in report.moment_checks)
    assert report.energy2_values == [0, 0]
    assert report.conjugate_matches == [True, True]
    assert [row["k"] for row in report.summary_rows()] == [1, 2]


def test_diagonal_model_has_one_saturator():
    """A = diag(1, 2) saturates only along X1"""
    model = CovarianceModel.from_quadratic_form([[1, 0], [0, 2]])
    report = run_pipeline(model, 3, freeness_degree=4, stein_samples=5)
    assert report.passed
    assert report.rank == 1
    assert report.saturators == [pytest.approx([1.0, 0.0])]
    assert report.verdict == "splits off L(F_1) factor (numerically certified at degree 3)"
    assert len(report.moment_rows()) == 8


def test_vacuous_model():
    """lambda_min(A) = 5/4: CD holds but nothing saturates"""
    model = CovarianceModel.from_quadratic_form(VACUOUS_FORM)
    report = run_pipeline(model, 2)
    assert report.passed
    assert report.rank == 0
    assert report.verdict == VACUOUS_VERDICT
    assert report.cd_min_eigenvalue == pytest.approx(1.25, abs=1e-8)


def test_curvature_below_one_fails_at_cd():
    """A = diag(1/2, 1) is not CD(1, inf)"""
    model = CovarianceModel.from_quadratic_form([[Fraction(1, 2), 0], [0, 1]])
    report = run_pipeline(model, 2)
    assert not report.passed
    assert report.failed_stage == "cd"
    assert report.verdict.startswith("failed at stage cd")


def test_report_json():
    """The report carries the verdict, the truncation note and the tolerances"""
    report = run_pipeline(CovarianceModel.standard(1), 3, freeness_degree=4, stein_samples=3)
    data = report.to_json()
    assert data["r"] == 1
    assert data["passed"]
    assert data["failed_stage"] is None
    assert data["moments"][0]["exact"]
    assert data["freeness"] == [{"max_residual": "0", "checked": 0}]
    assert "truncation" in data["note"]
    assert data["tolerances"]["eigen"] == 1e-8
