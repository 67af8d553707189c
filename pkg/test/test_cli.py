"""
pytest test cases for the command-line front end: task dispatch, report
writing and exit codes.
"""
import csv
import json
from fractions import Fraction
from pathlib import Path

import pytest

from free_obata.__main__ import main, parse_args
from free_obata.cli import (
    ScenarioError,
    adhoc_scenario,
    diagonal_witness,
    execute,
    rational_sqrt,
    run_scenario,
    setup_output_directory,
    task_handler,
    task_leibniz_suite,
    trace_command,
)
from free_obata.curvature import JacobianTensor
from free_obata.scenario import Scenario

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def read_report(out_dir):
    with open(Path(out_dir) / "report.json", encoding="utf-8") as file_obj:
        return json.load(file_obj)


def test_task_handler_dispatch():
    """Dashed task names map onto task_ functions"""
    assert task_handler("leibniz-suite") is task_leibniz_suite

    with pytest.raises(KeyError):
        task_handler("teleport")


def test_rational_sqrt():
    """Only perfect squares of rationals have a rational root"""
    assert rational_sqrt(Fraction(9, 4)) == Fraction(3, 2)
    assert rational_sqrt(Fraction(0)) == 0
    assert rational_sqrt(Fraction(2)) is None
    assert rational_sqrt(Fraction(-1)) is None


def test_diagonal_witness():
    """diag(1, 2) has the exact witness Q = diag(0, 1) at c = 1"""
    witness = diagonal_witness(JacobianTensor.scalar([[1, 0], [0, 2]]))
    assert witness == {"threshold": "1", "exact": True, "residual_terms": 0}
    assert diagonal_witness(JacobianTensor.scalar([[1, 0], [0, 3]])) is None
    assert diagonal_witness(JacobianTensor.scalar([[2, 1], [1, 2]])) is None


def test_setup_output_directory(tmp_path):
    """Nested directories are created and existing ones are accepted"""
    path = setup_output_directory(str(tmp_path / "a" / "b"))
    assert path.is_dir()
    assert setup_output_directory(str(path)) == path


def test_trace_command(tmp_path):
    """Exact traces print as rationals"""
    assert trace_command("X1*X2*X1*X2", 2) == "0"
    assert trace_command("X1^4 + 1/2*X1^2*X2^2", 2) == "5/2"

    model_file = tmp_path / "model.json"
    model_file.write_text(json.dumps({"n": 1, "C": [["2"]]}), encoding="utf-8")
    assert trace_command("X1^4", 1, str(model_file)) == "8"


def test_adhoc_scenario(tmp_path):
    """Flags become a one-task scenario; a model file fixes n"""
    scenario = adhoc_scenario("spectrum", n=2, degree=2, tol=1e-9, seed=3)
    assert scenario.tasks == ["spectrum"]
    assert scenario.tolerances.eigen == 1e-9
    assert scenario.seed == 3

    model_file = tmp_path / "model.toml"
    model_file.write_text('n = 2\nA = [["1", "0"], ["0", "2"]]\n', encoding="utf-8")
    scenario = adhoc_scenario("cd", model_file=str(model_file))
    assert scenario.n == 2
    assert scenario.quadratic_form == [[1, 0], [0, 2]]

    with pytest.raises(ValueError):
        adhoc_scenario("cd", n=3, model_file=str(model_file))


def test_adhoc_spectrum(tmp_path):
    """n = 1, d = 3: levels 0, 1, 2, 3, a spectrum.csv and exit 0"""
    args = parse_args(["spectrum", "-n", "1", "-d", "3", "--out", str(tmp_path), "--canonical"])
    assert execute(args) == 0

    report = read_report(tmp_path)
    assert report["passed"]
    result = report["tasks"]["spectrum"]
    assert [multiplicity for _, multiplicity in result["levels"]] == [1, 1, 1, 1]
    assert result["number_operator"]["matches"]
    assert "generated_at" not in report

    with open(tmp_path / "spectrum.csv", newline="", encoding="utf-8") as file_obj:
        rows = list(csv.reader(file_obj))
    assert rows[0] == ["value", "multiplicity", "1", "X1", "X1*X1", "X1*X1*X1"]
    assert len(rows) == 5


def test_canonical_reports_are_byte_identical(tmp_path):
    """Two canonical runs of the same scenario write the same bytes"""
    scenario = Scenario.from_file(str(CONFIGS / "obata_vacuous.toml"))
    assert run_scenario(scenario, str(tmp_path / "first"), canonical=True) == 0
    assert run_scenario(scenario, str(tmp_path / "second"), canonical=True) == 0
    first = (tmp_path / "first" / "report.json").read_bytes()
    second = (tmp_path / "second" / "report.json").read_bytes()
    assert first == second
    assert first.endswith(b"\n")


def test_vacuous_scenario_report(tmp_path):
    """Curvature 5/4: Poincare constant 4/5, CD certified and no saturator"""
    scenario = Scenario.from_file(str(CONFIGS / "obata_vacuous.toml"))
    assert run_scenario(scenario, str(tmp_path)) == 0
    report = read_report(tmp_path)
    assert report["tasks"]["poincare"]["constant"] == pytest.approx(0.8, abs=1e-8)
    assert report["tasks"]["cd"]["min_eigenvalue"] == pytest.approx(1.25, abs=1e-8)
    assert report["tasks"]["rigidity"]["r"] == 0
    assert "generated_at" in report
    assert (tmp_path / "saturators.csv").exists()


def test_failing_verdict_exits_one(tmp_path):
    """A = diag(1/2, 1) fails the CD stage of the rigidity pipeline"""
    scenario = Scenario(
        n=2,
        degree=2,
        tasks=["rigidity"],
        quadratic_form=[["1/2", "0"], ["0", "1"]],
        output=str(tmp_path),
    )
    assert run_scenario(scenario) == 1
    report = read_report(tmp_path)
    assert report["failed_tasks"] == ["rigidity"]
    assert report["tasks"]["rigidity"]["failed_stage"] == "cd"


def test_nonlinear_conjugates_are_a_usage_error(tmp_path):
    """The spectrum of a quartic potential has no exact truncation"""
    scenario = Scenario(
        n=1,
        degree=2,
        tasks=["spectrum"],
        potential="1/2*X1^2 + 1/4*X1^4",
        covariance=[["1"]],
        output=str(tmp_path),
    )
    with pytest.raises(ScenarioError) as err:
        run_scenario(scenario)
    assert err.value.exit_code == 2
    assert err.value.to_dict()["task"] == "spectrum"


def test_quadratic_potential_runs_in_its_own_state(tmp_path):
    """V = X1^2 + 1/2 X2^2: exact conjugate relation, Poincare constant 1/lambda_min(A) = 1"""
    scenario = Scenario(
        n=2,
        degree=3,
        tasks=["spectrum", "poincare", "bl"],
        potential="X1^2 + 1/2*X2^2",
        output=str(tmp_path),
    )
    assert run_scenario(scenario, canonical=True) == 0
    report = read_report(tmp_path)
    assert report["conjugate_relation"] == {
        "max_residual": "0",
        "checked": 2 * 15,
        "exact_state": True,
        "consistent": True,
    }
    assert report["tasks"]["poincare"]["constant"] == pytest.approx(1.0, abs=1e-8)
    assert report["tasks"]["poincare"]["gap_matches_curvature"]
    assert all(row["ordered"] for row in report["tasks"]["bl"]["rows"])


def test_perturbed_potential_reports_its_residual(tmp_path):
    """A quartic potential is not solved by the semicircular state; the run still passes"""
    scenario = Scenario(
        n=1,
        degree=2,
        tasks=["leibniz-suite"],
        potential="1/2*X1^2 + 1/4*X1^4",
        covariance=[["1"]],
        suite_size=5,
        output=str(tmp_path),
    )
    assert run_scenario(scenario, canonical=True) == 0
    relation = read_report(tmp_path)["conjugate_relation"]
    assert relation["checked"] == 3
    assert not relation["exact_state"]
    assert not relation["consistent"]
    assert relation["max_residual"] == "2"


def test_run_command_exit_codes(tmp_path):
    """Missing and malformed scenario files exit with 2"""
    assert execute(parse_args(["run", str(tmp_path / "missing.toml")])) == 2

    broken = tmp_path / "broken.toml"
    broken.write_text('n = 2\ndegree = 2\ntasks = ["teleport"]\n', encoding="utf-8")
    assert execute(parse_args(["run", str(broken)])) == 2

    unparsable = tmp_path / "unparsable.toml"
    unparsable.write_text("n = = 2\n", encoding="utf-8")
    assert execute(parse_args(["run", str(unparsable)])) == 2


def test_run_command_overrides(tmp_path):
    """--seed and --tol override the scenario file"""
    path = tmp_path / "scenario.json"
    path.write_text(
        json.dumps({"n": 1, "degree": 2, "tasks": ["poincare"], "seed": 1}), encoding="utf-8"
    )
    out_dir = tmp_path / "out"
    args = parse_args(
        ["run", str(path), "--seed", "9", "--tol", "1e-7", "--out", str(out_dir), "--canonical"]
    )
    assert execute(args) == 0
    scenario = read_report(out_dir)["scenario"]
    assert scenario["seed"] == 9
    assert scenario["tolerances"]["eigen"] == 1e-7


def test_scenario_from_environment(tmp_path, monkeypatch):
    """run without a path reads FREE_OBATA_SCENARIO"""
    path = tmp_path / "scenario.yaml"
    path.write_text("n: 1\ndegree: 2\ntasks: [spectrum]\n", encoding="utf-8")
    monkeypatch.setenv("FREE_OBATA_SCENARIO", str(path))
    args = parse_args(["run", "--out", str(tmp_path / "out")])
    assert args.scenario == str(path)
    assert execute(args) == 0


def test_parse_error_exits_two_with_a_caret(capsys):
    """Malformed polynomial text prints the caret diagnostic"""
    with pytest.raises(SystemExit) as err:
        main(["trace", "X1 + * X2", "-n", "2"])
    assert err.value.code == 2
    assert "       ^" in capsys.readouterr().err.splitlines()


def test_trace_main(capsys):
    """free-obata trace prints the exact value and exits 0"""
    with pytest.raises(SystemExit) as err:
        main(["trace", "X1^6", "-n", "1"])
    assert err.value.code == 0
    assert capsys.readouterr().out.strip() == "5"


def test_usage_errors_from_argparse():
    """Unknown commands are rejected by argparse with status 2"""
    with pytest.raises(SystemExit) as err:
        parse_args(["fly"])
    assert err.value.code == 2
