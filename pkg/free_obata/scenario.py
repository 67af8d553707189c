"""
A scenario describes one verification run: the model, the truncation degree,
the tasks to execute in order and the tolerances each verdict is tested
against.

Scenario files are TOML, JSON or YAML, chosen by suffix:

    name = "obata_standard"
    n = 2
    degree = 4
    tasks = ["spectrum", "poincare", "rigidity"]
    seed = 0

    [model]
    quadratic_form = [["1", "0"], ["0", "2"]]

    [tolerances]
    eigen = 1e-8

The file is validated against SCENARIO_SCHEMA before the Scenario object is
built; the attrs validators then check the semantic constraints the schema
cannot express.
"""
from fractions import Fraction
import json
import logging
import os
from typing import Any, Dict, List, Optional

import attr
import jsonschema
import toml
import yaml

from . import exact_linalg
from .curvature import PotentialSpec, conjugates_from_potential
from .ncpoly import NcPoly, format_coefficient
from .scenario_schema import SCENARIO_SCHEMA, TASK_NAMES
from .state import CovarianceModel

LOGGER = logging.getLogger(__name__)

DEFAULT_ALPHAS = [1.0, 10.0, 100.0]


@attr.s(slots=True, kw_only=True, frozen=True)
class Tolerances:
    """Tolerance ladder: spectral clustering, affinity, orthogonality, moments"""

    eigen: float = attr.ib(default=1e-8)
    affine: float = attr.ib(default=1e-8)
    orthogonality: float = attr.ib(default=1e-12)
    moment: float = attr.ib(default=1e-10)
    resolvent: float = attr.ib(default=1e-10)
    mc_sigmas: float = attr.ib(default=4.0)

    # self is required for the attr validation to work
    # pylint: disable=no-self-use
    @eigen.validator
    @affine.validator
    @orthogonality.validator
    @moment.validator
    @resolvent.validator
    @mc_sigmas.validator
    def validate_positive(self, attribute: attr.Attribute, value: float) -> None:
        if not value > 0:
            raise ValueError(f"Tolerance {attribute.name} must be positive, got {value}")

    def to_dict(self) -> Dict[str, float]:
        return attr.asdict(self)


def _matrix(rows: Optional[List[List[Any]]]) -> Optional[exact_linalg.Matrix]:
    if rows is None:
        return None
    return [[Fraction(str(entry).strip()) for entry in row] for row in rows]


@attr.s(slots=True, kw_only=True, frozen=True)
class Scenario:
    """Everything a run needs; immutable once validated"""

    n: int = attr.ib()
    degree: int = attr.ib()
    tasks: List[str] = attr.ib(converter=list)
    name: str = attr.ib(default="scenario")
    covariance: Optional[exact_linalg.Matrix] = attr.ib(default=None, converter=_matrix)
    quadratic_form: Optional[exact_linalg.Matrix] = attr.ib(default=None, converter=_matrix)
    potential: Optional[str] = attr.ib(default=None)
    tensor_degree: Optional[int] = attr.ib(default=None)
    seed: int = attr.ib(default=0)
    output: str = attr.ib(factory=lambda: os.getenv("FREE_OBATA_OUT", "out"))
    alphas: List[float] = attr.ib(factory=lambda: list(DEFAULT_ALPHAS), converter=list)
    suite_size: int = attr.ib(default=200)
    tolerances: Tolerances = attr.ib(factory=Tolerances)
    mc_matrix_size: int = attr.ib(default=300)
    mc_trials: int = attr.ib(default=50)
    mc_words: Optional[List[str]] = attr.ib(default=None)
    log_level: str = attr.ib(factory=lambda: os.getenv("FREE_OBATA_LOGLEVEL", "info"))

    # self is required for the attr validation to work
    # pylint: disable=no-self-use
    @n.validator
    def validate_n(self, _: attr.Attribute, n: int) -> None:
        if n < 1:
            raise ValueError(f"Generator count must be at least 1, got {n}")

    @degree.validator
    def validate_degree(self, _: attr.Attribute, degree: int) -> None:
        if degree < 1:
            raise ValueError(f"Degree must be at least 1, got {degree}")

    @tasks.validator
    def validate_tasks(self, _: attr.Attribute, tasks: List[str]) -> None:
        if not tasks:
            raise ValueError("A scenario needs at least one task")
        unknown = [task for task in tasks if task not in TASK_NAMES]
        if unknown:
            raise ValueError(f"Unknown tasks {unknown}")

    @covariance.validator
    @quadratic_form.validator
    def validate_matrix(self, attribute: attr.Attribute, matrix) -> None:
        """Square n x n and symmetric positive definite"""
        if matrix is None:
            return
        if len(matrix) != self.n or any(len(row) != self.n for row in matrix):
            raise ValueError(f"{attribute.name} must be {self.n}x{self.n}")
        if not exact_linalg.is_positive_definite(matrix):
            raise exact_linalg.NotPositiveDefinite(
                f"{attribute.name} is not symmetric positive definite"
            )

    @potential.validator
    def validate_potential(self, _: attr.Attribute, potential: Optional[str]) -> None:
        if potential is not None:
            PotentialSpec.from_text(potential, self.n)

    def __attrs_post_init__(self) -> None:
        if self.covariance is not None and self.quadratic_form is not None:
            raise ValueError("Give either a covariance or a quadratic form, not both")
        if self.potential is None:
            return
        form = self.potential_form()
        has_model = self.covariance is not None or self.quadratic_form is not None
        if form is None:
            if not has_model:
                raise ValueError(
                    "A potential that is not a quadratic form needs an explicit [model] "
                    "to evaluate traces against"
                )
            return
        if not exact_linalg.is_positive_definite(form):
            raise exact_linalg.NotPositiveDefinite(
                f"Quadratic potential {self.potential!r} is not positive definite"
            )
        if has_model and self.model().precision() != form:
            raise ValueError(
                f"Quadratic potential {self.potential!r} does not match the model's "
                "quadratic form"
            )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Scenario":
        """Validate against SCENARIO_SCHEMA, then build

        Raises jsonschema.ValidationError or ValueError on invalid input
        """
        jsonschema.validate(data, SCENARIO_SCHEMA)
        model = data.get("model", {})
        monte_carlo = data.get("monte_carlo", {})
        if "level" in data.get("logging", {}):
            data = dict(data, log_level=data["logging"]["level"])
        kwargs: Dict[str, Any] = {
            key: data[key]
            for key in (
                "name",
                "potential",
                "tensor_degree",
                "seed",
                "output",
                "alphas",
                "suite_size",
                "log_level",
            )
            if key in data
        }
        return cls(
            n=data["n"],
            degree=data["degree"],
            tasks=data["tasks"],
            covariance=model.get("covariance"),
            quadratic_form=model.get("quadratic_form"),
            tolerances=Tolerances(**data.get("tolerances", {})),
            mc_matrix_size=monte_carlo.get("matrix_size", 300),
            mc_trials=monte_carlo.get("trials", 50),
            mc_words=monte_carlo.get("words"),
            **kwargs,
        )

    @classmethod
    def from_file(cls, path: str) -> "Scenario":
        """Load a TOML, JSON or YAML scenario file chosen by suffix"""
        suffix = os.path.splitext(path)[1].lower()
        with open(path, encoding="utf-8") as file_obj:
            if suffix == ".toml":
                data = toml.load(file_obj)
            elif suffix == ".json":
                data = json.load(file_obj)
            elif suffix in (".yaml", ".yml"):
                data = yaml.safe_load(file_obj)
            else:
                raise ValueError(f"Unsupported scenario format {suffix!r} for {path}")

        if not isinstance(data, dict):
            raise ValueError(f"Scenario file {path} does not contain a table")
        data.setdefault("name", os.path.splitext(os.path.basename(path))[0])
        LOGGER.debug(f"Loaded scenario {data['name']} from {path}")
        return cls.from_dict(data)

    def potential_form(self) -> Optional[exact_linalg.Matrix]:
        """A of a purely quadratic potential 1/2 <X, AX>, else None"""
        if self.potential is None:
            return None
        return PotentialSpec.from_text(self.potential, self.n).hessian()

    def model(self) -> CovarianceModel:
        """The semicircular state traces are taken in

        Without a [model] section a quadratic potential fixes its own state,
        C = A^-1 with A the potential's Hessian.
        """
        if self.covariance is not None:
            return CovarianceModel(self.n, self.covariance)
        if self.quadratic_form is not None:
            return CovarianceModel.from_quadratic_form(self.quadratic_form)
        form = self.potential_form()
        if form is not None:
            return CovarianceModel.from_quadratic_form(form)
        return CovarianceModel.standard(self.n)

    def conjugates(self, model: Optional[CovarianceModel] = None) -> List[NcPoly]:
        """The potential's cyclic gradient when one is given, else the model's linear system"""
        if self.potential is not None:
            return conjugates_from_potential(PotentialSpec.from_text(self.potential, self.n))
        return (model or self.model()).conjugates()

    @property
    def effective_tensor_degree(self) -> int:
        if self.tensor_degree is not None:
            return self.tensor_degree
        return max(self.degree - 1, 0)

    def to_dict(self) -> Dict[str, Any]:
        """Canonical form recorded in the report"""
        model: Dict[str, Any] = {}
        if self.covariance is not None:
            model["covariance"] = _format_matrix(self.covariance)
        if self.quadratic_form is not None:
            model["quadratic_form"] = _format_matrix(self.quadratic_form)
        return {
            "name": self.name,
            "n": self.n,
            "degree": self.degree,
            "tensor_degree": self.effective_tensor_degree,
            "tasks": list(self.tasks),
            "model": model,
            "potential": self.potential,
            "seed": self.seed,
            "alphas": list(self.alphas),
            "suite_size": self.suite_size,
            "tolerances": self.tolerances.to_dict(),
            "monte_carlo": {
                "matrix_size": self.mc_matrix_size,
                "trials": self.mc_trials,
                "words": self.mc_words,
            },
        }


def _format_matrix(matrix: exact_linalg.Matrix) -> List[List[str]]:
    return [[format_coefficient(entry) for entry in row] for row in matrix]
