"""
Command-line front end for free_obata.

A run is described by a scenario (see scenario.py) naming a model, a
truncation degree and the verification tasks to execute in order:

    - leibniz-suite
    - trace-crosscheck
    - spectrum
    - poincare
    - cd
    - bl
    - rigidity
    - jacobian-symmetry

Every task returns a dict with at least a "passed" flag and the tolerance its
verdict was tested against.  All task results are collected in report.json
in the output directory, next to the per-task CSVs:

    spectrum.csv      one row per eigenvector of the truncated Laplacian
    saturators.csv    one row per saturator found by the rigidity pipeline
    moments.csv       moments of each rotated generator against Catalan numbers

Exit status is 0 when every verdict passes, 1 when some verdict fails and 2
for usage errors (unreadable scenario, schema violations, malformed
polynomial text, tasks that do not apply to the given conjugate system).
"""
import csv
from datetime import datetime, timezone
from fractions import Fraction
import json
import logging
import math
import os
from pathlib import Path
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

import attr
import jsonschema
import numpy as np
import toml
import yaml

from . import exact_linalg
from .calculus import identity_suite
from .curvature import (
    JacobianTensor,
    bl_bound,
    cd_certificate,
    clark_ocone_residual,
    cramer_rao_gap,
    fisher_information,
    jacobian,
    schwarz_suite,
    sos_certificate,
)
from .mc_oracle import BIAS_CONSTANT, McConfig, corpus_for, crosscheck
from .ncpoly import NcPoly, ParseError, format_coefficient, format_word, parse_poly
from .rigidity import obata_report
from .scenario import Scenario, Tolerances
from .scenario_schema import MODEL_FILE_SCHEMA, REPORT_SCHEMA
from .spectral import (
    EigensolverFailure,
    IdentityViolation,
    OperatorMatrix,
    TensorSpace,
    TruncatedSpace,
    all_words,
    laplacian,
    poincare_constant,
    resolvent,
    resolvent_properties,
    resolvent_via_semigroup,
    spectrum,
)
from .state import CovarianceModel, conjugate_relation_residual, trace

LOGGER = logging.getLogger(__name__)

BL_CANDIDATES = ["X1", "X1^2", "X1*X2", "X1^2 + X2^2", "X1^3", "X1*X2*X1"]

JACOBIAN_SUITE_SIZE = 50


@attr.s
class ScenarioError(Exception):
    """Raised when a scenario or command line cannot be turned into a run

    exit_code follows the command-line contract; payload is merged into the
    error report
    """

    message: str = attr.ib()
    exit_code: int = attr.ib(default=2)
    payload: Optional[dict] = attr.ib(default=None)

    def to_dict(self):
        """Convert into a dict suitable for writing as JSON"""
        result = dict(self.payload or ())
        result["message"] = self.message
        return result


def setup_logging(log_level: str) -> None:
    """Setup logging format and level"""
    logging.basicConfig(
        level=log_level.upper(),
        format="%(asctime)s %(levelname)8s: (%(funcName)s) %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    LOGGER.setLevel(getattr(logging, log_level.upper()))


def setup_output_directory(out_dir: str) -> Path:
    """Create the output directory and its parents

    No error is thrown if the directory already exists.
    """
    try:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
    except PermissionError as perr:
        raise ScenarioError(f"Could not create output directory {out_dir}: {perr}") from perr
    LOGGER.info(f"Output directory: {out_dir}")
    return path


@attr.s(slots=True)
class TaskContext:
    """Shared state of one run; spaces and operators are built on first use"""

    scenario: Scenario = attr.ib()
    out_dir: Path = attr.ib()
    model: CovarianceModel = attr.ib()
    xi: List[NcPoly] = attr.ib()
    _space: Optional[TruncatedSpace] = attr.ib(default=None)
    _tensor_space: Optional[TensorSpace] = attr.ib(default=None)
    _operator: Optional[OperatorMatrix] = attr.ib(default=None)
    _jacobian: Optional[JacobianTensor] = attr.ib(default=None)

    @classmethod
    def build(cls, scenario: Scenario, out_dir: Path) -> "TaskContext":
        model = scenario.model()
        return cls(scenario, out_dir, model, scenario.conjugates(model))

    @property
    def tolerances(self) -> Tolerances:
        return self.scenario.tolerances

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.scenario.seed)

    def space(self) -> TruncatedSpace:
        if self._space is None:
            self._space = TruncatedSpace.build(self.model, self.scenario.degree)
        return self._space

    def tensor_space(self) -> TensorSpace:
        if self._tensor_space is None:
            self._tensor_space = TensorSpace.build(
                self.model, self.scenario.effective_tensor_degree
            )
        return self._tensor_space

    def operator(self) -> OperatorMatrix:
        if self._operator is None:
            self._operator = laplacian(self.space(), self.xi)
        return self._operator

    def jacobian(self) -> JacobianTensor:
        if self._jacobian is None:
            self._jacobian = jacobian(self.xi)
        return self._jacobian

    @property
    def linear_system(self) -> bool:
        """True when the conjugates are the model's own linear system A X"""
        return self.scenario.potential is None or self.scenario.potential_form() is not None

    def model_curvature(self) -> Optional[float]:
        """lambda_min(A) when the conjugates are the model's own linear system"""
        if not self.linear_system:
            return None
        return float(np.linalg.eigvalsh(exact_linalg.to_array(self.model.precision()))[0])


def constant_matrix(jac: JacobianTensor) -> exact_linalg.Matrix:
    """Scalar entries of a constant Jacobian"""
    return [
        [jac.entries[i][j].terms.get(((), ()), Fraction(0)) for j in range(jac.n)]
        for i in range(jac.n)
    ]


def rational_sqrt(value: Fraction) -> Optional[Fraction]:
    """Exact square root of a non-negative rational, or None if it is irrational"""
    if value < 0:
        return None
    numerator = math.isqrt(value.numerator)
    denominator = math.isqrt(value.denominator)
    root = Fraction(numerator, denominator)
    return root if root * root == value else None


def diagonal_witness(jac: JacobianTensor) -> Optional[Dict[str, Any]]:
    """Sum-of-squares witness for a constant diagonal Jacobian

    J - c I = Q* Q with Q = diag(sqrt(a_ii - c)) and c the smallest diagonal
    entry; None when J is not of that form or a root is irrational.
    """
    if not jac.is_constant():
        return None
    matrix = constant_matrix(jac)
    n = jac.n
    if any(matrix[i][j] for i in range(n) for j in range(n) if i != j):
        return None
    threshold = min(matrix[i][i] for i in range(n))
    roots = [rational_sqrt(matrix[i][i] - threshold) for i in range(n)]
    if any(root is None for root in roots):
        return None
    witness = JacobianTensor.scalar(
        [[roots[i] if i == j else Fraction(0) for j in range(n)] for i in range(n)]
    )
    result = sos_certificate(jac, witness, threshold)
    return {
        "threshold": format_coefficient(result.threshold),
        "exact": result.exact,
        "residual_terms": result.residual_terms,
    }


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as file_obj:
        writer = csv.writer(file_obj)
        writer.writerow(header)
        writer.writerows(rows)
    LOGGER.info(f"Wrote {len(rows)} rows to {path}")


def write_dict_csv(path: Path, rows: Sequence[Dict[str, Any]]) -> None:
    header: List[str] = []
    for row in rows:
        header.extend(key for key in row if key not in header)
    write_csv(path, header, [[row.get(key, "") for key in header] for row in rows])


def task_leibniz_suite(ctx: TaskContext) -> Dict[str, Any]:
    """Exact derivation identities on random polynomials and potentials"""
    size = ctx.scenario.suite_size
    suite = identity_suite(
        ctx.rng(), min(ctx.scenario.n, 3), count=size, potential_count=max(size // 2, 1)
    )
    return {"passed": suite.passed, "checks": suite.to_dict(), "tolerance": "exact"}


def task_trace_crosscheck(ctx: TaskContext) -> Dict[str, Any]:
    """Exact traces against GUE estimates"""
    scenario = ctx.scenario
    cfg = McConfig(
        matrix_size=scenario.mc_matrix_size,
        trials=scenario.mc_trials,
        seed=scenario.seed,
        model=ctx.model,
    )
    words = scenario.mc_words or corpus_for(scenario.n)
    result = crosscheck(words, cfg, sigmas=ctx.tolerances.mc_sigmas)
    summary = result.to_dict()
    summary["tolerance"] = {"sigmas": ctx.tolerances.mc_sigmas, "bias_constant": BIAS_CONSTANT}
    return summary


def _number_operator_levels(n: int, degree: int) -> List[List[int]]:
    return [[k, n ** k] for k in range(degree + 1)]


def task_spectrum(ctx: TaskContext) -> Dict[str, Any]:
    """Clustered spectrum, kernel, resolvent and semigroup checks; writes spectrum.csv"""
    tols = ctx.tolerances
    space = ctx.space()
    clusters = spectrum(space, ctx.xi, tols.eigen)

    rows = []
    for cluster in clusters:
        for column in cluster.vectors.T:
            rows.append([cluster.value, cluster.multiplicity] + [float(v) for v in column])
    write_csv(
        ctx.out_dir / "spectrum.csv",
        ["value", "multiplicity"] + [format_word(word) for word in space.basis],
        rows,
    )

    levels = [[cluster.value, cluster.multiplicity] for cluster in clusters]
    kernel_ok = abs(clusters[0].value) <= tols.eigen and clusters[0].multiplicity == 1
    positive = all(cluster.value >= -tols.eigen for cluster in clusters)

    operator = ctx.operator()
    resolvents = []
    for alpha in ctx.scenario.alphas:
        check = resolvent_properties(alpha, operator, space)
        exact = resolvent(alpha, operator).array
        via_semigroup = resolvent_via_semigroup(alpha, operator, space)
        semigroup_gap = float(np.max(np.abs(exact - via_semigroup)))
        resolvents.append(
            {
                **attr.asdict(check),
                "semigroup_agreement": semigroup_gap,
                "passed": check.passed(tols.resolvent) and semigroup_gap <= tols.eigen,
            }
        )

    result: Dict[str, Any] = {
        "dimension": space.dimension,
        "levels": levels,
        "kernel_is_constants": kernel_ok,
        "non_negative": positive,
        "resolvents": resolvents,
        "tolerance": {"eigen": tols.eigen, "resolvent": tols.resolvent},
    }
    passed = kernel_ok and positive and all(entry["passed"] for entry in resolvents)

    if ctx.model.is_standard() and ctx.linear_system:
        expected = _number_operator_levels(ctx.scenario.n, ctx.scenario.degree)
        matches = len(levels) == len(expected) and all(
            abs(value - k) <= tols.eigen and multiplicity == count
            for (value, multiplicity), (k, count) in zip(levels, expected)
        )
        result["number_operator"] = {"expected": expected, "matches": matches}
        passed = passed and matches

    result["passed"] = passed
    return result


def task_poincare(ctx: TaskContext) -> Dict[str, Any]:
    """Best Poincare constant against the coarse bound and the curvature bound 1/c"""
    tols = ctx.tolerances
    result = poincare_constant(ctx.space(), ctx.xi, tols.eigen)
    summary: Dict[str, Any] = {
        "constant": result.constant,
        "gap": result.gap,
        "coarse_bound": result.coarse_bound,
        "minimizer": [float(value) for value in result.minimizer],
        "tolerance": tols.eigen,
    }
    passed = result.constant <= result.coarse_bound + tols.eigen
    curvature = ctx.model_curvature()
    if curvature is not None:
        summary["curvature"] = curvature
        summary["curvature_bound"] = 1.0 / curvature
        summary["gap_matches_curvature"] = abs(result.gap - curvature) <= tols.eigen
        passed = passed and result.constant <= 1.0 / curvature + tols.eigen
        passed = passed and summary["gap_matches_curvature"]
    summary["passed"] = passed
    return summary


def task_cd(ctx: TaskContext) -> Dict[str, Any]:
    """Numeric CD certificate on the truncated tensor space, with an exact witness if one exists"""
    tols = ctx.tolerances
    jac = ctx.jacobian()
    curvature = ctx.model_curvature()
    threshold = curvature if curvature is not None else 0.0
    certificate = cd_certificate(jac, ctx.tensor_space(), threshold, tols.eigen)
    summary = certificate.to_dict()
    if curvature is not None:
        summary["passed"] = abs(certificate.min_eigenvalue - curvature) <= tols.eigen
    summary["sos_witness"] = diagonal_witness(jac)
    return summary


def task_bl(ctx: TaskContext) -> Dict[str, Any]:
    """Var(Y) <= <R^-1 dY, dY> <= E(Y) / c on small test polynomials"""
    tols = ctx.tolerances
    space2 = ctx.tensor_space()
    n = ctx.scenario.n
    rows = []
    for text in corpus_for(n, BL_CANDIDATES):
        y = parse_poly(text, n)
        if y.degree() - 1 > space2.degree:
            continue
        bound = bl_bound(y, ctx.jacobian(), space2, tols.eigen)
        rows.append(
            {
                "polynomial": text,
                "variance": bound.variance,
                "bl_value": bound.bl_value,
                "plain_bound": bound.plain_bound,
                "curvature": bound.curvature,
                "ordered": bound.ordered,
            }
        )
    return {
        "rows": rows,
        "tolerance": tols.eigen,
        "passed": bool(rows) and all(row["ordered"] for row in rows),
    }


def task_rigidity(ctx: TaskContext) -> Dict[str, Any]:
    """Full rigidity pipeline; writes saturators.csv and moments.csv"""
    report = obata_report(
        ctx.model, ctx.xi, ctx.space(), ctx.tolerances, seed=ctx.scenario.seed
    )
    write_dict_csv(ctx.out_dir / "saturators.csv", report.summary_rows())
    write_dict_csv(ctx.out_dir / "moments.csv", report.moment_rows())
    return report.to_json()


def task_jacobian_symmetry(ctx: TaskContext) -> Dict[str, Any]:
    """Symmetry triple and Clark-Ocone identity, plus information measures of the conjugates"""
    n = ctx.scenario.n
    failed = schwarz_suite(ctx.rng(), min(n, 3), count=JACOBIAN_SUITE_SIZE)
    jac = ctx.jacobian()
    symmetries = jac.check_symmetries()
    residuals = [
        format_coefficient(clark_ocone_residual(j, ctx.xi, jac, ctx.model))
        for j in range(1, n + 1)
    ]
    gap = cramer_rao_gap(ctx.xi, ctx.model)
    passed = not any(failed.values()) and symmetries.passed and set(residuals) == {"0"}
    if ctx.linear_system:
        passed = passed and gap >= 0
    return {
        "suite_failures": failed,
        "suite_size": JACOBIAN_SUITE_SIZE,
        "symmetries": symmetries.to_dict(),
        "clark_ocone_residuals": residuals,
        "fisher_information": format_coefficient(fisher_information(ctx.xi, ctx.model)),
        "cramer_rao_gap": format_coefficient(gap),
        "tolerance": "exact",
        "passed": passed,
    }


def task_handler(task: str) -> Callable[[TaskContext], Dict[str, Any]]:
    """The task_<name> function for a task name"""
    return globals()[f"task_{task.replace('-', '_')}"]


def _json_default(value: Any) -> Any:
    if isinstance(value, Fraction):
        return format_coefficient(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def run_task(task: str, ctx: TaskContext) -> Dict[str, Any]:
    """Run one task; failures of exact identities or eigensolves fail the task, not the run

    Usage errors (a task that does not apply to the conjugate system or the
    truncation) are raised as ScenarioError.
    """
    LOGGER.info(f"Starting task {task}")
    try:
        result = task_handler(task)(ctx)
    except (IdentityViolation, EigensolverFailure, exact_linalg.SingularMatrix) as err:
        LOGGER.error(f"Task {task} failed: {err}")
        return {"passed": False, "stage": task, "error": str(err)}
    except ValueError as err:
        raise ScenarioError(f"Task {task} cannot run: {err}", payload={"task": task}) from err
    LOGGER.info(f"Finished task {task}: passed={result['passed']}")
    return result


def conjugate_relation_summary(ctx: TaskContext) -> Dict[str, Any]:
    """tau(xi_i P) - tau (x) tau(d_i P) over every basis word P of the truncation

    Zero for a quadratic potential in its own state.  For other potentials the
    residual measures how far the model's state is from a solution.
    """
    n = ctx.scenario.n
    worst = Fraction(0)
    checked = 0
    for word in all_words(n, ctx.scenario.degree):
        p = NcPoly.from_word(word, n)
        for i in range(1, n + 1):
            worst = max(worst, abs(conjugate_relation_residual(i, ctx.xi[i - 1], p, ctx.model)))
            checked += 1
    LOGGER.info(f"Conjugate relation: max residual {worst} over {checked} checks")
    return {
        "max_residual": worst,
        "checked": checked,
        "exact_state": ctx.linear_system,
        "consistent": worst == 0,
    }


def build_report(scenario: Scenario, out_dir: Path, canonical: bool = False) -> Dict[str, Any]:
    """Execute the scenario's tasks in order and assemble the validated report"""
    ctx = TaskContext.build(scenario, out_dir)
    tasks = {task: run_task(task, ctx) for task in scenario.tasks}
    failed = [task for task, result in tasks.items() if not result["passed"]]
    raw: Dict[str, Any] = {
        "scenario": scenario.to_dict(),
        "tasks": tasks,
        "passed": not failed,
        "failed_tasks": failed,
    }
    if scenario.potential is not None:
        relation = conjugate_relation_summary(ctx)
        raw["conjugate_relation"] = relation
        if relation["exact_state"] and not relation["consistent"]:
            raw["passed"] = False
    if not canonical:
        raw["generated_at"] = datetime.now(timezone.utc).isoformat()

    report = json.loads(json.dumps(raw, default=_json_default))
    jsonschema.validate(report, REPORT_SCHEMA)
    return report


def run_scenario(
    scenario: Scenario, out_dir: Optional[str] = None, canonical: bool = False
) -> int:
    """Run a scenario and write report.json; returns the exit code"""
    path = setup_output_directory(out_dir or scenario.output)
    report = build_report(scenario, path, canonical)
    report_path = path / "report.json"
    with open(report_path, "w", encoding="utf-8") as file_obj:
        file_obj.write(json.dumps(report, sort_keys=True, indent=2))
        file_obj.write("\n")
    LOGGER.info(f"Wrote {report_path}")

    if report["passed"]:
        LOGGER.info(f"Scenario {scenario.name}: all {len(report['tasks'])} tasks passed")
        return 0
    LOGGER.error(f"Scenario {scenario.name}: failed tasks {report['failed_tasks']}")
    return 1


def load_data_file(path: str) -> Dict[str, Any]:
    """Read a TOML, JSON or YAML mapping chosen by suffix"""
    suffix = os.path.splitext(path)[1].lower()
    with open(path, encoding="utf-8") as file_obj:
        if suffix == ".toml":
            data = toml.load(file_obj)
        elif suffix in (".yaml", ".yml"):
            data = yaml.safe_load(file_obj)
        else:
            data = json.load(file_obj)
    if not isinstance(data, dict):
        raise ValueError(f"{path} does not contain a mapping")
    return data


def model_section(path: str, n: Optional[int]) -> Dict[str, Any]:
    """Turn a --model file {"n": .., "C" | "A": ..} into scenario keys"""
    data = load_data_file(path)
    jsonschema.validate(data, MODEL_FILE_SCHEMA)
    if n is not None and n != data["n"]:
        raise ValueError(f"Model file {path} has n={data['n']} but -n {n} was given")
    key, matrix = ("covariance", data["C"]) if "C" in data else ("quadratic_form", data["A"])
    return {"n": data["n"], "model": {key: matrix}}


def adhoc_scenario(
    task: str,
    n: Optional[int] = None,
    degree: int = 3,
    model_file: Optional[str] = None,
    tol: Optional[float] = None,
    seed: int = 0,
) -> Scenario:
    """One-task scenario built from command-line flags"""
    data: Dict[str, Any] = {"name": task, "degree": degree, "tasks": [task], "seed": seed}
    if model_file is not None:
        data.update(model_section(model_file, n))
    else:
        data["n"] = n if n is not None else 1
    if tol is not None:
        data["tolerances"] = {"eigen": tol}
    return Scenario.from_dict(data)


def trace_command(text: str, n: int, model_file: Optional[str] = None) -> str:
    """Exact trace of a polynomial under the model, formatted as a rational"""
    if model_file is not None:
        section = model_section(model_file, None)
        n = section["n"]
        model = Scenario.from_dict(
            {"n": n, "degree": 1, "tasks": ["spectrum"], "model": section["model"]}
        ).model()
    else:
        model = CovarianceModel.standard(n)
    return format_coefficient(trace(parse_poly(text, n), model))


def execute(args: Any) -> int:
    """Dispatch a parsed command line; returns the exit code

    Usage errors are logged and mapped to exit code 2.
    """
    # Anything unexpected is logged and mapped to the failure exit code
    # rather than a traceback, so it's not bad in this case to catch all
    # exceptions broadly: it's what we want
    # pylint: disable=broad-except
    try:
        if args.command == "trace":
            print(trace_command(args.polynomial, args.n or 1, args.model))
            return 0

        if args.command == "run":
            if not args.scenario or not os.path.isfile(args.scenario):
                raise ScenarioError(f"Scenario file {args.scenario!r} not found")
            scenario = Scenario.from_file(args.scenario)
            if args.seed is not None:
                scenario = attr.evolve(scenario, seed=args.seed)
            if args.tol is not None:
                scenario = attr.evolve(
                    scenario, tolerances=attr.evolve(scenario.tolerances, eigen=args.tol)
                )
        else:
            scenario = adhoc_scenario(
                args.command, args.n, args.degree, args.model, args.tol, args.seed or 0
            )

        if not args.log_level:
            logging.getLogger(__package__).setLevel(scenario.log_level.upper())
        return run_scenario(scenario, args.out, args.canonical)
    except ParseError as err:
        print(str(err), file=sys.stderr)
        LOGGER.error(f"Malformed polynomial: {err.message}")
        return 2
    except ScenarioError as err:
        LOGGER.error(json.dumps(err.to_dict(), sort_keys=True))
        return err.exit_code
    except (jsonschema.ValidationError, ValueError, OSError) as err:
        LOGGER.error(f"Invalid input: {err}")
        return 2
    except Exception as err:
        LOGGER.error(f"When running {args.command}: {err}")
        return 1
