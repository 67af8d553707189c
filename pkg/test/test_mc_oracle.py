"""
pytest test cases for free_obata.mc_oracle, the random matrix cross-check of
exact traces.
"""
from fractions import Fraction

import numpy as np
import pytest

from free_obata.mc_oracle import (
    DEFAULT_CORPUS,
    DegreeCapExceeded,
    McConfig,
    corpus_for,
    crosscheck,
    gue,
    mc_trace,
    sample_family,
    symmetric_sqrt,
)
from free_obata.ncpoly import parse_poly
from free_obata.state import CovarianceModel

SMALL_CORPUS = ["1", "X1^2", "X1^4", "X1*X2*X1*X2", "X1^2*X2^2"]


@pytest.fixture(name="cfg")
def _cfg():
    return McConfig(matrix_size=60, trials=12, seed=5, model=CovarianceModel.standard(2))


@pytest.mark.parametrize(
    "kwargs",
    [{"matrix_size": 1}, {"trials": 0}, {"seed": -1}, {"workers": 0}],
)
def test_config_validation(kwargs):
    """N >= 2, T >= 1, seed >= 0 and at least one worker"""
    with pytest.raises(ValueError):
        McConfig(model=CovarianceModel.standard(1), **kwargs)


def test_trial_streams_are_reproducible(cfg):
    """Spawned streams depend only on the seed"""
    first = [np.random.default_rng(s).integers(1 << 30) for s in cfg.trial_streams()]
    second = [np.random.default_rng(s).integers(1 << 30) for s in cfg.trial_streams()]
    assert first == second
    assert len(first) == cfg.trials
    assert len(set(first)) == cfg.trials


def test_gue_is_hermitian_and_normalized():
    """S = S^* and tau_N(S^2) is close to 1"""
    sample = gue(np.random.default_rng(0), 200)
    assert np.allclose(sample, sample.conj().T)
    assert np.trace(sample @ sample).real / 200 == pytest.approx(1.0, abs=0.05)


def test_symmetric_square_root():
    """(C^(1/2))^2 = C"""
    model = CovarianceModel(2, [[2, Fraction(1, 2)], [Fraction(1, 2), 1]])
    root = symmetric_sqrt(model)
    assert np.allclose(root @ root, [[2.0, 0.5], [0.5, 1.0]])
    assert np.allclose(root, root.T)


def test_sampled_family_has_the_covariance():
    """tau_N(X_i X_j) approximates C_ij"""
    model = CovarianceModel(2, [[2, Fraction(1, 2)], [Fraction(1, 2), 1]])
    cfg = McConfig(matrix_size=300, trials=1, seed=1, model=model)
    family = sample_family(cfg)
    covariance = [[np.trace(a @ b).real / 300 for b in family] for a in family]
    assert np.allclose(covariance, [[2.0, 0.5], [0.5, 1.0]], atol=0.1)


def test_unit_trace_is_exact(cfg):
    """The empty word has trace one with no spread"""
    estimate = mc_trace(parse_poly("1", 2), cfg)
    assert estimate.mean == 1.0
    assert estimate.stderr == 0.0
    assert estimate.trials == cfg.trials


def test_degree_cap(cfg):
    """Words longer than ten letters are not sampled"""
    with pytest.raises(DegreeCapExceeded):
        mc_trace(parse_poly("X1^11", 2), cfg)


def test_model_mismatch(cfg):
    """Polynomials must live over the model's generators"""
    with pytest.raises(ValueError):
        mc_trace(parse_poly("X1^2", 1), cfg)


def test_corpus_filter():
    """Entries naming X2 are dropped for n = 1"""
    corpus = corpus_for(1)
    assert "X1^4" in corpus
    assert "1" in corpus
    assert not any("X2" in text for text in corpus)
    assert corpus_for(2) == DEFAULT_CORPUS


def test_crosscheck_agrees_with_exact_traces(cfg):
    """Estimates fall within sigmas (stderr + 1/N) of the exact values"""
    result = crosscheck(SMALL_CORPUS, cfg)
    assert result.passed
    assert [row.exact for row in result.rows] == [1, 1, 2, 0, 1]
    unit = result.rows[0]
    assert unit.passed
    assert unit.estimate == 1.0
    data = result.to_dict()
    assert data["N"] == 60
    assert data["T"] == 12
    assert len(data["rows"]) == len(SMALL_CORPUS)


def test_crosscheck_is_independent_of_workers(cfg):
    """Parallel trials reproduce the sequential estimates exactly"""
    parallel = McConfig(matrix_size=60, trials=12, seed=5, model=cfg.model, workers=3)
    sequential_rows = crosscheck(SMALL_CORPUS, cfg).rows
    parallel_rows = crosscheck(SMALL_CORPUS, parallel).rows
    assert [row.estimate for row in sequential_rows] == [row.estimate for row in parallel_rows]


def test_crosscheck_flags_a_wrong_model():
    """Sampling with C = 4 I against exact traces of C = I is caught"""
    sampled = CovarianceModel(1, [[4]])
    cfg = McConfig(matrix_size=60, trials=8, seed=2, model=sampled)
    result = crosscheck(["X1^2", "X1^4"], cfg, allowed_failures=0)
    assert [row.exact for row in result.rows] == [4, 32]

    exact_model = CovarianceModel.standard(1)
    mismatched = crosscheck(
        ["X1^2", "X1^4"],
        McConfig(matrix_size=60, trials=8, seed=2, model=exact_model),
        allowed_failures=0,
    )
    assert all(
        abs(wrong.estimate - float(right.exact)) > right.bound
        for wrong, right in zip(result.rows, mismatched.rows)
    )
