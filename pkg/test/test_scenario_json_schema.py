"""
Contains tests for the JSON schema of scenario files, model files and the
report.json a run emits.
"""
from contextlib import contextmanager

from hypothesis import given
import hypothesis.strategies as st
from jsonschema import validate, ValidationError
import pytest

from free_obata.scenario_schema import (
    MODEL_FILE_SCHEMA,
    RATIONAL_SCHEMA,
    REPORT_SCHEMA,
    SCENARIO_SCHEMA,
    TASK_NAMES,
)

RATIONAL_STRINGS = st.fractions(max_denominator=50).map(str)

TASK_LISTS = st.lists(st.sampled_from(TASK_NAMES), min_size=1)


@contextmanager
def not_raises(exception):
    """Context manager to ensures that a particular exception was not raised

    Taken from:

    https://stackoverflow.com/questions/20274987/how-to-use-pytest-to-check-that-error-is-not-raised
    """
    try:
        yield
    except exception:
        pytest.fail(f"DID RAISE {exception}")


@given(st.integers(min_value=1), st.integers(min_value=1), TASK_LISTS)
def test_known_valid_scenarios(n, degree, tasks):
    """Assert true for minimal scenarios with any known tasks"""
    with not_raises(ValidationError):
        validate({"n": n, "degree": degree, "tasks": tasks}, SCENARIO_SCHEMA)


@given(RATIONAL_STRINGS)
def test_rational_strings(text):
    """Fractions print in a form the schema accepts"""
    with not_raises(ValidationError):
        validate(text, RATIONAL_SCHEMA)
        validate(f" {text} ", RATIONAL_SCHEMA)


@pytest.mark.parametrize("text", ["", "1/", "X1", "1e-3", "--2", "3/ 4"])
def test_invalid_rational_strings(text):
    """Anything but integers, decimals and fractions is rejected"""
    with pytest.raises(ValidationError):
        validate(text, RATIONAL_SCHEMA)


def test_full_scenario():
    """Every optional section at once"""
    scenario = {
        "name": "full",
        "n": 2,
        "degree": 3,
        "tensor_degree": 2,
        "tasks": ["leibniz-suite", "trace-crosscheck", "rigidity"],
        "model": {"covariance": [["1", "1/2"], ["1/2", 1]]},
        "potential": "1/2*X1^2 + 1/2*X2^2",
        "seed": 3,
        "output": "out",
        "alphas": [0.5, 2],
        "suite_size": 10,
        "tolerances": {"eigen": 1e-9, "mc_sigmas": 5},
        "monte_carlo": {"matrix_size": 100, "trials": 5, "words": ["X1^2"]},
        "logging": {"level": "warning"},
    }
    with not_raises(ValidationError):
        validate(scenario, SCENARIO_SCHEMA)


def test_invalid_scenarios_empty_values():
    """Should throw an error for scenarios with empty or missing values"""
    with pytest.raises(ValidationError):
        validate({}, SCENARIO_SCHEMA)

    with pytest.raises(ValidationError):
        validate({"n": 1, "degree": 1, "tasks": []}, SCENARIO_SCHEMA)

    with pytest.raises(ValidationError):
        validate({"n": 1, "degree": 1, "tasks": ["cd"], "name": ""}, SCENARIO_SCHEMA)


def test_report_conjugate_relation():
    """The conjugate relation section needs all four fields"""
    report = {
        "scenario": {"name": "x"},
        "tasks": {},
        "passed": True,
        "failed_tasks": [],
        "conjugate_relation": {
            "max_residual": "2",
            "checked": 3,
            "exact_state": False,
            "consistent": False,
        },
    }
    with not_raises(ValidationError):
        validate(report, REPORT_SCHEMA)

    del report["conjugate_relation"]["checked"]
    with pytest.raises(ValidationError):
        validate(report, REPORT_SCHEMA)


def test_model_holds_exactly_one_matrix():
    """covariance or quadratic_form, never both"""
    both = {"covariance": [["1"]], "quadratic_form": [["1"]]}
    with pytest.raises(ValidationError):
        validate({"n": 1, "degree": 1, "tasks": ["cd"], "model": both}, SCENARIO_SCHEMA)


def test_logging_levels():
    """Only the standard level names are allowed"""
    with pytest.raises(ValidationError):
        validate(
            {"n": 1, "degree": 1, "tasks": ["cd"], "logging": {"level": "loud"}}, SCENARIO_SCHEMA
        )


def test_model_files():
    """{"n", "C"} or {"n", "A"}"""
    with not_raises(ValidationError):
        validate({"n": 1, "C": [["2"]]}, MODEL_FILE_SCHEMA)
        validate({"n": 2, "A": [[1, 0], [0, "3/2"]]}, MODEL_FILE_SCHEMA)

    with pytest.raises(ValidationError):
        validate({"n": 1}, MODEL_FILE_SCHEMA)

    with pytest.raises(ValidationError):
        validate({"n": 1, "C": [["1"]], "A": [["1"]]}, MODEL_FILE_SCHEMA)


def test_reports():
    """Every task result carries a passed flag"""
    report = {
        "scenario": {"name": "x"},
        "tasks": {"spectrum": {"passed": True, "levels": []}},
        "passed": True,
        "failed_tasks": [],
    }
    with not_raises(ValidationError):
        validate(report, REPORT_SCHEMA)

    with pytest.raises(ValidationError):
        validate(dict(report, tasks={"spectrum": {}}), REPORT_SCHEMA)

    with pytest.raises(ValidationError):
        validate(dict(report, failed_tasks=["nothing"]), REPORT_SCHEMA)
