"""
The rigidity pipeline for saturators of the free Poincare inequality.

A saturator is a centered f with E(f) = ||f||^2, i.e. an eigenvector of the
Laplacian at eigenvalue 1 under the curvature bound CD(1, inf).  The pipeline
finds the eigenspace, checks that it consists of affine functions, completes
the saturator directions to an orthogonal change of variables and verifies
that each new variable Y_k is standard semicircular and free from the rest:

    find_saturators -> realify -> affine_check -> orthogonal_completion
        -> change_of_variables -> semicircular_check -> freeness_check

Moments and freeness are checked in exact arithmetic whenever the completed
orthogonal matrix is exactly rational, and against the moment tolerance
otherwise.
"""
from fractions import Fraction
from itertools import product
import logging
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import attr
import numpy as np

from . import exact_linalg
from .calculus import fdq
from .curvature import cd_certificate, jacobian
from .ncpoly import NcPoly, format_coefficient, random_poly
from .scenario import Tolerances
from .spectral import (
    TensorSpace,
    TruncatedSpace,
    centered_spectrum,
    curvature_contraction,
    dirichlet_energy,
    energy2,
)
from .state import CovarianceModel, centered, tensor_trace, trace

LOGGER = logging.getLogger(__name__)

MAX_DENOMINATOR = 10 ** 12

VACUOUS_VERDICT = "no saturator; rigidity hypothesis vacuous"

TRUNCATION_NOTE = (
    "dim E1 is finite automatically on a truncated space; this is an artifact of the "
    "truncation and does not verify the finiteness hypothesis"
)


class RankDeficient(ValueError):
    """Raised when saturator directions are not orthonormal"""


class NotOrthogonal(ValueError):
    """Raised when a change of variables is not orthogonal"""


Vector = Union[np.ndarray, NcPoly]


def _as_vector(f: Vector, space: TruncatedSpace) -> np.ndarray:
    if isinstance(f, NcPoly):
        return np.array([float(entry) for entry in space.coordinates(f)])
    return np.asarray(f, dtype=float)


def rationalize(value: float, max_denominator: int = MAX_DENOMINATOR) -> Fraction:
    return Fraction(value).limit_denominator(max_denominator)


def _g_gram_schmidt(
    candidates: Sequence[np.ndarray], gram: np.ndarray, rank: int, tol: float
) -> List[np.ndarray]:
    basis: List[np.ndarray] = []
    for candidate in candidates:
        vector = candidate.astype(float).copy()
        for done in basis:
            vector -= (done @ gram @ vector) * done
        norm = np.sqrt(max(vector @ gram @ vector, 0.0))
        if norm > tol:
            basis.append(vector / norm)
        if len(basis) == rank:
            break
    return basis


def find_saturators(space: TruncatedSpace, xi: Sequence[NcPoly], tol: float = 1e-8) -> np.ndarray:
    """G-orthonormal basis of the centered eigenspace at eigenvalue 1, as columns

    The basis is canonical: the projections of X_1, ..., X_n (then of the
    remaining monomials) onto the eigenspace are orthonormalized in order.
    """
    clusters = centered_spectrum(space, xi, tol)
    eigenspace = next((c.vectors for c in clusters if abs(c.value - 1.0) <= tol), None)
    if eigenspace is None:
        LOGGER.info("No eigenvalue 1 in the centered spectrum")
        return np.zeros((space.dimension, 0))

    gram = space.gram_array()
    rank = eigenspace.shape[1]
    projector = eigenspace @ eigenspace.T @ gram
    generators = [space.index[(i,)] for i in range(1, space.n + 1)] if space.degree else []
    order = generators + [k for k in range(space.dimension) if k not in generators]
    candidates = [projector[:, k] for k in order]
    basis = _g_gram_schmidt(candidates, gram, rank, np.sqrt(tol))
    LOGGER.info(f"Found {rank} saturators")
    return np.array(basis).T


@attr.s(frozen=True, slots=True)
class AffineResult:
    residual: float = attr.ib()
    constant: float = attr.ib()
    coefficients: np.ndarray = attr.ib(eq=False)
    tolerance: float = attr.ib()

    @property
    def affine(self) -> bool:
        return self.residual <= self.tolerance


def affine_check(f: Vector, space: TruncatedSpace, tol: float = 1e-8) -> AffineResult:
    """G-distance of f from span{1, X_1, ..., X_n}"""
    vector = _as_vector(f, space)
    gram = space.gram_array()
    words = [()] + ([(i,) for i in range(1, space.n + 1)] if space.degree else [])
    columns = np.zeros((space.dimension, len(words)))
    for k, word in enumerate(words):
        columns[space.index[word], k] = 1.0
    coefficients = np.linalg.solve(columns.T @ gram @ columns, columns.T @ gram @ vector)
    residual = space.g_norm(vector - columns @ coefficients)
    return AffineResult(residual, float(coefficients[0]), coefficients[1:], tol)


def _reversal_permutation(space: TruncatedSpace) -> List[int]:
    return [space.index[word[::-1]] for word in space.basis]


def realify(f: Vector, space: TruncatedSpace) -> Tuple[np.ndarray, np.ndarray]:
    """(1/2 (f + f*), 1/2 (f - f*)) on real coefficient vectors

    Coefficients are real here, so the second component is the skew part of
    f rather than an imaginary part; it vanishes for self-adjoint f.
    """
    vector = _as_vector(f, space)
    starred = vector[_reversal_permutation(space)]
    return (vector + starred) / 2, (vector - starred) / 2


def orthogonal_completion(directions: Sequence[Sequence[float]], tol: float = 1e-8) -> np.ndarray:
    """U in O(n) whose first rows are the given orthonormal directions

    Completion runs Gram-Schmidt over e_1, ..., e_n in order; when there is
    freedom the last row is flipped so that det U = +1.
    """
    rows = np.atleast_2d(np.asarray(directions, dtype=float))
    rank, n = rows.shape
    if rank > n:
        raise RankDeficient(f"{rank} directions in dimension {n}")
    if rank and np.max(np.abs(rows @ rows.T - np.eye(rank))) > tol:
        raise RankDeficient("Saturator directions are not orthonormal")

    candidates = list(rows) + list(np.eye(n))
    basis = _g_gram_schmidt(candidates, np.eye(n), n, tol)
    if len(basis) < rank:
        raise RankDeficient("Saturator directions are linearly dependent")
    matrix = np.array(basis)
    if rank < n and np.linalg.det(matrix) < 0:
        matrix[-1] = -matrix[-1]
    return matrix


def rational_orthogonal(matrix: np.ndarray) -> Tuple[exact_linalg.Matrix, bool]:
    """Rationalized entries and whether the result is exactly orthogonal"""
    rational = [[rationalize(value) for value in row] for row in matrix]
    size = len(rational)
    product_matrix = exact_linalg.matmul(rational, exact_linalg.transpose(rational))
    return rational, product_matrix == exact_linalg.identity(size)


@attr.s(frozen=True, slots=True)
class ChangeOfVariables:
    """Y_i = sum_j U_ij (X_j - tau(X_j)) with conjugates sum_j U_ij xi_j"""

    generators: Tuple[NcPoly, ...] = attr.ib(converter=tuple)
    conjugates: Tuple[NcPoly, ...] = attr.ib(converter=tuple)
    covariance: exact_linalg.Matrix = attr.ib(eq=False)
    exact: bool = attr.ib()


def change_of_variables(
    matrix: Union[np.ndarray, exact_linalg.Matrix],
    model: CovarianceModel,
    xi: Sequence[NcPoly],
    tol: float = 1e-12,
) -> ChangeOfVariables:
    """New generators, their conjugate system and the covariance U C U^T"""
    if isinstance(matrix, np.ndarray):
        rational, exact = rational_orthogonal(matrix)
    else:
        rational = exact_linalg.to_fraction_matrix(matrix)
        exact = exact_linalg.matmul(rational, exact_linalg.transpose(rational)) == (
            exact_linalg.identity(len(rational))
        )
    n = model.n
    if len(rational) != n or any(len(row) != n for row in rational):
        raise NotOrthogonal(f"Change of variables must be {n}x{n}")
    if not exact:
        deviation = exact_linalg.to_array(
            exact_linalg.matmul(rational, exact_linalg.transpose(rational))
        ) - np.eye(n)
        if np.max(np.abs(deviation)) > tol:
            raise NotOrthogonal(f"U U^T deviates from I by {np.max(np.abs(deviation)):.3g}")

    generators = []
    conjugates = []
    for row in rational:
        y = NcPoly.zero(n)
        eta = NcPoly.zero(n)
        for j, coef in enumerate(row):
            if coef:
                y = y + centered(NcPoly.generator(j + 1, n), model) * coef
                eta = eta + xi[j] * coef
        generators.append(y)
        conjugates.append(eta)

    covariance = exact_linalg.matmul(
        exact_linalg.matmul(rational, [list(row) for row in model.covariance]),
        exact_linalg.transpose(rational),
    )
    return ChangeOfVariables(generators, conjugates, covariance, exact)


def catalan_moments(max_moment: int) -> List[int]:
    """Moments 1, 0, 1, 0, 2, 0, 5, ... of the standard semicircle through the
    recursion m_{k+2} = sum_j m_j m_{k-j}"""
    moments = [1, 0]
    for k in range(0, max_moment - 1):
        moments.append(sum(moments[j] * moments[k - j] for j in range(k + 1)))
    return moments[: max_moment + 1]


@attr.s(frozen=True, slots=True)
class MomentCheck:
    """tau(f^m) against Catalan_m/2 v^(m/2), v = tau(f^2)"""

    variance: Fraction = attr.ib()
    values: Tuple[Fraction, ...] = attr.ib(converter=tuple)
    expected: Tuple[Fraction, ...] = attr.ib(converter=tuple)

    @property
    def residuals(self) -> List[Fraction]:
        return [value - target for value, target in zip(self.values, self.expected)]

    @property
    def max_residual(self) -> float:
        return max((abs(float(r)) for r in self.residuals), default=0.0)

    @property
    def exact_match(self) -> bool:
        return not any(self.residuals)

    def rows(self) -> Iterator[Tuple[int, Fraction, Fraction]]:
        for order, (value, target) in enumerate(zip(self.values, self.expected), start=1):
            yield order, value, target


def semicircular_check(f: NcPoly, model: CovarianceModel, max_moment: int = 8) -> MomentCheck:
    """Moments 1..max_moment of f against a semicircle of the same variance"""
    catalan = catalan_moments(max_moment)
    power = NcPoly.one(f.n)
    values = []
    for _ in range(max_moment):
        power = power * f
        values.append(trace(power, model))
    variance = values[1] if max_moment >= 2 else trace(f * f, model)
    expected = [
        Fraction(catalan[m]) * variance ** (m // 2) if m % 2 == 0 else Fraction(0)
        for m in range(1, max_moment + 1)
    ]
    return MomentCheck(variance, values, expected)


def _compositions(total: int, minimum_parts: int) -> Iterator[Tuple[int, ...]]:
    """Ordered tuples of positive integers with sum <= total and at least minimum_parts parts"""

    def extend(prefix: Tuple[int, ...], remaining: int) -> Iterator[Tuple[int, ...]]:
        if len(prefix) >= minimum_parts:
            yield prefix
        for part in range(1, remaining + 1):
            yield from extend(prefix + (part,), remaining - part)

    yield from extend((), total)


def _words_of_length(family: Sequence[NcPoly], length: int) -> Iterator[NcPoly]:
    for letters in product(range(len(family)), repeat=length):
        word = NcPoly.one(family[0].n)
        for letter in letters:
            word = word * family[letter]
        yield word


@attr.s(frozen=True, slots=True)
class FreenessCheck:
    max_residual: Fraction = attr.ib()
    checked: int = attr.ib()
    worst: Optional[str] = attr.ib(default=None)


def freeness_check(
    y1: NcPoly, others: Sequence[NcPoly], model: CovarianceModel, max_degree: int = 6
) -> FreenessCheck:
    """Largest |tau(a_1 b_1 a_2 ...)| over alternating centered products

    a_k are centered powers of y1 and b_k centered words in the others; every
    product has at least two factors and total degree <= max_degree.
    The pipeline calls this once per saturator with every other Y_j as the
    second family, which is stronger than splitting into two blocks.
    """
    if not others:
        return FreenessCheck(Fraction(0), 0)
    families = [[y1], list(others)]
    centered_blocks: Dict[Tuple[int, int], List[NcPoly]] = {}

    def blocks(family: int, length: int) -> List[NcPoly]:
        key = (family, length)
        if key not in centered_blocks:
            centered_blocks[key] = [
                centered(word, model) for word in _words_of_length(families[family], length)
            ]
        return centered_blocks[key]

    worst = Fraction(0)
    worst_label = None
    checked = 0
    for lengths in _compositions(max_degree, 2):
        for start in (0, 1):
            pools = [blocks((start + k) % 2, length) for k, length in enumerate(lengths)]
            for factors in product(*pools):
                value = NcPoly.one(y1.n)
                for factor in factors:
                    value = value * factor
                residual = abs(trace(value, model))
                checked += 1
                if residual > worst:
                    worst = residual
                    worst_label = f"start={start} lengths={lengths}"
    LOGGER.debug(f"Freeness: {checked} alternating products, max residual {worst}")
    return FreenessCheck(worst, checked, worst_label)


def stein_residual(u: Sequence[Any], g: NcPoly, model: CovarianceModel) -> Fraction:
    """tau(Y g) - tau (x) tau(sum_j u_j d_j g) with Y = sum_j u_j X_j"""
    n = model.n
    coefficients = [Fraction(value) for value in u]
    y = NcPoly(n, {(j + 1,): coef for j, coef in enumerate(coefficients)})
    lhs = trace(y * g, model)
    rhs = sum(
        (coef * tensor_trace(fdq(j + 1, g), model) for j, coef in enumerate(coefficients) if coef),
        Fraction(0),
    )
    return lhs - rhs


def _serialize(value: Fraction) -> str:
    return format_coefficient(value)


@attr.s(slots=True, kw_only=True)
class RigidityReport:
    """Everything the pipeline measured, with the verdict and the failing stage"""

    n: int = attr.ib()
    degree: int = attr.ib()
    rank: int = attr.ib(default=0)
    cd_min_eigenvalue: Optional[float] = attr.ib(default=None)
    saturators: List[List[float]] = attr.ib(factory=list)
    orthogonal: List[List[float]] = attr.ib(factory=list)
    orthogonal_exact: bool = attr.ib(default=False)
    affine_residuals: List[float] = attr.ib(factory=list)
    skew_norms: List[float] = attr.ib(factory=list)
    moment_checks: List[MomentCheck] = attr.ib(factory=list)
    freeness: List[FreenessCheck] = attr.ib(factory=list)
    stein_residuals: List[Fraction] = attr.ib(factory=list)
    conjugate_matches: List[bool] = attr.ib(factory=list)
    energy_residuals: List[Fraction] = attr.ib(factory=list)
    energy2_values: List[Fraction] = attr.ib(factory=list)
    tolerances: Tolerances = attr.ib(factory=Tolerances)
    failed_stage: Optional[str] = attr.ib(default=None)
    verdict: str = attr.ib(default="")

    @property
    def passed(self) -> bool:
        return self.failed_stage is None

    def fail(self, stage: str, reason: str) -> "RigidityReport":
        self.failed_stage = stage
        self.verdict = f"failed at stage {stage}: {reason}"
        LOGGER.error(f"Rigidity pipeline failed at {stage}: {reason}")
        return self

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "degree": self.degree,
            "r": self.rank,
            "cd_min_eigenvalue": self.cd_min_eigenvalue,
            "saturators": self.saturators,
            "U": self.orthogonal,
            "U_exact": self.orthogonal_exact,
            "affine_residuals": self.affine_residuals,
            "skew_norms": self.skew_norms,
            "moments": [
                {
                    "variance": _serialize(check.variance),
                    "values": [_serialize(value) for value in check.values],
                    "residuals": [_serialize(value) for value in check.residuals],
                    "exact": check.exact_match,
                }
                for check in self.moment_checks
            ],
            "freeness": [
                {"max_residual": _serialize(check.max_residual), "checked": check.checked}
                for check in self.freeness
            ],
            "stein_residuals": [_serialize(value) for value in self.stein_residuals],
            "conjugate_identity": self.conjugate_matches,
            "energy_identity_residuals": [_serialize(value) for value in self.energy_residuals],
            "energy2": [_serialize(value) for value in self.energy2_values],
            "tolerances": self.tolerances.to_dict(),
            "verdict": self.verdict,
            "passed": self.passed,
            "failed_stage": self.failed_stage,
            "note": TRUNCATION_NOTE,
        }

    def summary_rows(self) -> List[Dict[str, Any]]:
        """One row per saturator for saturators.csv"""
        rows = []
        for k in range(self.rank):
            row: Dict[str, Any] = {"k": k + 1}
            row.update({f"u{j + 1}": value for j, value in enumerate(self.saturators[k])})
            if k < len(self.affine_residuals):
                row["affine_residual"] = self.affine_residuals[k]
            if k < len(self.moment_checks):
                row["moment_max_residual"] = self.moment_checks[k].max_residual
            if k < len(self.freeness):
                row["freeness_max_residual"] = float(self.freeness[k].max_residual)
            if k < len(self.stein_residuals):
                row["stein_residual"] = float(self.stein_residuals[k])
            rows.append(row)
        return rows

    def moment_rows(self) -> List[Dict[str, Any]]:
        """One row per saturator and moment order for moments.csv"""
        rows = []
        for k, check in enumerate(self.moment_checks):
            for order, value, target in check.rows():
                rows.append(
                    {
                        "k": k + 1,
                        "order": order,
                        "value": _serialize(value),
                        "expected": _serialize(target),
                        "residual": _serialize(value - target),
                    }
                )
        return rows


def _within(value: Fraction, exact: bool, tol: float) -> bool:
    return not value if exact else abs(float(value)) <= tol


def obata_report(
    model: CovarianceModel,
    xi: Sequence[NcPoly],
    space: TruncatedSpace,
    tols: Optional[Tolerances] = None,
    max_moment: int = 8,
    freeness_degree: int = 6,
    stein_samples: int = 20,
    cd_degree: int = 1,
    seed: int = 0,
) -> RigidityReport:
    """Run the whole pipeline; the first failing stage is named in the report"""
    tols = tols or Tolerances()
    n = model.n
    report = RigidityReport(n=n, degree=space.degree, tolerances=tols)

    jac = jacobian(xi)
    certificate = cd_certificate(jac, TensorSpace.build(model, cd_degree), 1.0, tols.eigen)
    report.cd_min_eigenvalue = certificate.min_eigenvalue
    if not certificate.passed:
        return report.fail("cd", f"CD(1, inf) not certified ({certificate.label})")

    saturators = find_saturators(space, xi, tols.eigen)
    report.rank = saturators.shape[1]
    if report.rank > n:
        return report.fail("saturators", f"eigenspace dimension {report.rank} exceeds n={n}")
    if report.rank == 0:
        report.verdict = VACUOUS_VERDICT
        LOGGER.info(report.verdict)
        return report

    directions = []
    for k in range(report.rank):
        real, skew = realify(saturators[:, k], space)
        report.skew_norms.append(space.g_norm(skew))
        affine = affine_check(real, space, tols.affine)
        report.affine_residuals.append(affine.residual)
        if not affine.affine:
            return report.fail("affine", f"saturator {k + 1} residual {affine.residual:.3g}")
        directions.append(affine.coefficients)
    report.saturators = [[float(value) for value in direction] for direction in directions]

    try:
        matrix = orthogonal_completion(directions, tol=np.sqrt(tols.eigen))
    except RankDeficient as err:
        return report.fail("orthogonal_completion", str(err))
    report.orthogonal = matrix.tolist()

    try:
        change = change_of_variables(matrix, model, xi, tols.orthogonality)
    except NotOrthogonal as err:
        return report.fail("change_of_variables", str(err))
    report.orthogonal_exact = change.exact

    rng = np.random.default_rng(seed)
    for k in range(report.rank):
        y = change.generators[k]
        check = semicircular_check(y, model, max_moment)
        report.moment_checks.append(check)
        if not _within(check.variance - 1, change.exact, tols.moment):
            return report.fail("semicircular", f"Y{k + 1} has variance {check.variance}")
        if not all(_within(r, change.exact, tols.moment) for r in check.residuals):
            return report.fail("semicircular", f"Y{k + 1} moments differ from Catalan")

        others = [change.generators[j] for j in range(n) if j != k]
        freeness = freeness_check(y, others, model, freeness_degree)
        report.freeness.append(freeness)
        if not _within(freeness.max_residual, change.exact, tols.moment):
            return report.fail("freeness", f"Y{k + 1} residual {float(freeness.max_residual):.3g}")

        u = [rationalize(value) for value in matrix[k]]
        worst = max(
            (abs(stein_residual(u, random_poly(rng, n, 5), model)) for _ in range(stein_samples)),
            default=Fraction(0),
        )
        report.stein_residuals.append(worst)
        if not _within(worst, change.exact, tols.moment):
            return report.fail("stein", f"Y{k + 1} residual {float(worst):.3g}")

        matches = change.conjugates[k] == y
        report.conjugate_matches.append(matches)
        if change.exact and not matches:
            return report.fail("conjugates", f"conjugate of Y{k + 1} differs from Y{k + 1}")

        value2 = energy2(y, space, xi)
        lemma = dirichlet_energy(y, space) - curvature_contraction(y, jac.entries, model)
        report.energy2_values.append(value2)
        report.energy_residuals.append(value2 - lemma)
        if not _within(value2, change.exact, tols.moment):
            return report.fail("energy2", f"second gradient energy of Y{k + 1} is {value2}")
        if not _within(value2 - lemma, change.exact, tols.moment):
            return report.fail("energy2", f"E2 = E - C identity fails for Y{k + 1}")

    report.verdict = (
        f"splits off L(F_{report.rank}) factor (numerically certified at degree {space.degree})"
    )
    LOGGER.info(f"Rigidity verdict: {report.verdict}")
    return report
