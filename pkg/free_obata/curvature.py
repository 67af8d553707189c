"""
Conjugate systems of potentials and the curvature they carry.

For a self-adjoint potential V the conjugate system is the cyclic gradient
xi = DV and its Jacobian is the n x n matrix of tensors J[i][j] = d_j xi_i.
The Jacobian acts on vectors of tensors through the right leg

    (R_J eta)_i = sum_j eta_j # J[j][i]

and the curvature condition J >= c (1 (x) 1) I_n is tested as positivity of
that action on a truncated tensor space.  All certificates here are relative
to the semicircular state of the model and to the truncation degree.
"""
from fractions import Fraction
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import attr
import numpy as np
import scipy.linalg

from . import exact_linalg
from .calculus import conjugates_from_cyclic, fdq
from .ncpoly import (
    NcPoly,
    TensorPoly2,
    Word,
    bimodule_act,
    format_coefficient,
    format_word,
    parse_poly,
    random_self_adjoint,
    sharp2,
)
from .spectral import (
    DEFAULT_EIGEN_TOLERANCE,
    DegreeOverflow,
    EigensolverFailure,
    OperatorMatrix,
    TensorSpace,
)
from .state import CovarianceModel, norm_squared, slice_right, tensor_inner, trace, variance

LOGGER = logging.getLogger(__name__)


class NotSelfAdjoint(ValueError):
    """Raised when a potential is not fixed by the star involution"""


@attr.s(frozen=True, slots=True)
class PotentialSpec:
    """A self-adjoint polynomial potential V"""

    potential: NcPoly = attr.ib()

    @potential.validator
    def _validate_potential(self, _: attr.Attribute, potential: NcPoly) -> None:
        if not potential.is_self_adjoint():
            raise NotSelfAdjoint(f"Potential {potential} is not self-adjoint")

    @classmethod
    def from_text(cls, text: str, n: int) -> "PotentialSpec":
        return cls(parse_poly(text, n))

    @classmethod
    def quadratic(cls, quadratic_form: Sequence[Sequence[Any]]) -> "PotentialSpec":
        """V = 1/2 sum_ij A_ij X_i X_j"""
        matrix = exact_linalg.to_fraction_matrix(quadratic_form)
        n = len(matrix)
        terms = {
            (i + 1, j + 1): matrix[i][j] / 2 for i in range(n) for j in range(n) if matrix[i][j]
        }
        return cls(NcPoly(n, terms))

    @property
    def n(self) -> int:
        return self.potential.n

    def hessian(self) -> Optional[exact_linalg.Matrix]:
        """A with V = 1/2 sum_ij A_ij X_i X_j, or None when V has other terms"""
        if any(len(word) != 2 for word in self.potential.terms):
            return None
        matrix = exact_linalg.zeros(self.n, self.n)
        for (i, j), coef in self.potential.terms.items():
            matrix[i - 1][j - 1] += coef
            matrix[j - 1][i - 1] += coef
        return matrix


def conjugates_from_potential(spec: PotentialSpec) -> List[NcPoly]:
    """xi_i = D_i V"""
    return conjugates_from_cyclic(spec.potential)


def _validate_entries(instance, _: attr.Attribute, entries) -> None:
    if len(entries) != instance.n or any(len(row) != instance.n for row in entries):
        raise ValueError(f"Jacobian must be {instance.n}x{instance.n}")
    for row in entries:
        for entry in row:
            if entry.n != instance.n:
                raise ValueError(f"Jacobian entry over {entry.n} generators, expected {instance.n}")


def _freeze_rows(rows: Sequence[Sequence[TensorPoly2]]) -> Tuple[Tuple[TensorPoly2, ...], ...]:
    return tuple(tuple(row) for row in rows)


@attr.s(frozen=True, slots=True)
class SymmetryReport:
    schwarz: bool = attr.ib()
    star: bool = attr.ib()
    dagger: bool = attr.ib()

    @property
    def passed(self) -> bool:
        return self.schwarz and self.star and self.dagger

    def to_dict(self) -> Dict[str, bool]:
        return {"schwarz": self.schwarz, "star": self.star, "dagger": self.dagger}


@attr.s(frozen=True, slots=True)
class JacobianTensor:
    """entries[i][j] = d_j xi_i, stored 0-based"""

    n: int = attr.ib()
    entries: Tuple[Tuple[TensorPoly2, ...], ...] = attr.ib(
        converter=_freeze_rows, validator=_validate_entries
    )

    @classmethod
    def scalar(cls, matrix: Sequence[Sequence[Any]]) -> "JacobianTensor":
        """entries[i][j] = matrix[i][j] (1 (x) 1)"""
        n = len(matrix)
        unit = TensorPoly2.unit(n)
        return cls(n, [[unit.scale(Fraction(entry)) for entry in row] for row in matrix])

    def entry(self, i: int, j: int) -> TensorPoly2:
        """1-based access"""
        return self.entries[i - 1][j - 1]

    def is_constant(self) -> bool:
        return all(entry.degree() <= 0 for row in self.entries for entry in row)

    def degree(self) -> int:
        return max(entry.degree() for row in self.entries for entry in row)

    def check_symmetries(self) -> SymmetryReport:
        """Schwarz J_ij = sigma(J_ji), star J_ij* = J_ji, dagger J_ij^dagger = J_ij"""
        pairs = [(i, j) for i in range(self.n) for j in range(self.n)]
        return SymmetryReport(
            schwarz=all(self.entries[i][j] == self.entries[j][i].flip() for i, j in pairs),
            star=all(self.entries[i][j].star() == self.entries[j][i] for i, j in pairs),
            dagger=all(self.entries[i][j].dagger() == self.entries[i][j] for i, j in pairs),
        )

    def to_json(self) -> List[List[List[List[str]]]]:
        """Each entry as a list of [coefficient, left word, right word] terms"""
        return [
            [
                [_format_term(coef, key) for key, coef in entry]
                for entry in row
            ]
            for row in self.entries
        ]


def _format_term(coef: Fraction, key: Tuple[Word, Word]) -> List[str]:
    return [format_coefficient(coef)] + [format_word(word) for word in key]


def jacobian(xi: Sequence[NcPoly]) -> JacobianTensor:
    n = len(xi)
    return JacobianTensor(n, [[fdq(j, xi[i]) for j in range(1, n + 1)] for i in range(n)])


def right_leg_apply(jac: JacobianTensor, eta: Sequence[TensorPoly2]) -> List[TensorPoly2]:
    """(R_J eta)_i = sum_j eta_j # J[j][i]"""
    if len(eta) != jac.n:
        raise ValueError(f"Expected {jac.n} tensor components, got {len(eta)}")
    result = []
    for i in range(jac.n):
        total = TensorPoly2.zero(jac.n)
        for j in range(jac.n):
            if eta[j]:
                total = total + sharp2(eta[j], jac.entries[j][i])
        result.append(total)
    return result


def matrix_sharp(first: JacobianTensor, second: JacobianTensor) -> JacobianTensor:
    """(T # S)_ik = sum_j T_ij # S_jk; R_S o R_T = R_(T # S)"""
    if first.n != second.n:
        raise ValueError(f"Matrix sizes differ: {first.n} != {second.n}")
    n = first.n
    entries = []
    for i in range(n):
        row = []
        for k in range(n):
            total = TensorPoly2.zero(n)
            for j in range(n):
                total = total + sharp2(first.entries[i][j], second.entries[j][k])
            row.append(total)
        entries.append(row)
    return JacobianTensor(n, entries)


def matrix_star(jac: JacobianTensor) -> JacobianTensor:
    """(T*)_ij = (T_ji)*"""
    n = jac.n
    return JacobianTensor(n, [[jac.entries[j][i].star() for j in range(n)] for i in range(n)])


@attr.s(frozen=True, slots=True, repr=False)
class DirectSum:
    """n copies of a tensor space; coordinates are concatenated blockwise"""

    base: TensorSpace = attr.ib()
    copies: int = attr.ib()

    def __repr__(self) -> str:
        return f"DirectSum({self.base!r}, copies={self.copies})"

    @property
    def dimension(self) -> int:
        return self.copies * self.base.dimension

    def gram_array(self) -> np.ndarray:
        return np.kron(np.eye(self.copies), self.base.gram_array())

    def coordinates(self, eta: Sequence[TensorPoly2]) -> List[Fraction]:
        vector: List[Fraction] = []
        for component in eta:
            vector.extend(self.base.coordinates(component))
        return vector

    def basis_vector(self, block: int, pair: Tuple[Word, Word]) -> List[TensorPoly2]:
        n = self.base.n
        return [
            TensorPoly2(n, {pair: 1}) if k == block else TensorPoly2.zero(n)
            for k in range(self.copies)
        ]

    def inner(self, first: Sequence[TensorPoly2], second: Sequence[TensorPoly2]) -> Fraction:
        return sum(
            (tensor_inner(a, b, self.base.model) for a, b in zip(first, second)), Fraction(0)
        )


def _block_basis(space: DirectSum) -> List[List[TensorPoly2]]:
    return [
        space.basis_vector(block, pair)
        for block in range(space.copies)
        for pair in space.base.basis
    ]


def right_leg_matrix(
    jac: JacobianTensor, space2: TensorSpace, compress: Optional[bool] = None
) -> OperatorMatrix:
    """Matrix of R_J on the n-fold direct sum of a truncated tensor space

    A constant Jacobian maps the space into itself and the matrix is the
    coefficient matrix of the images.  Otherwise, or when compress is set,
    the G-compression G^-1 [<R e_a, e_b>] is computed by an exact solve on
    each block.
    """
    if jac.n != space2.n:
        raise ValueError(f"Jacobian over {jac.n} generators, space over {space2.n}")
    total = DirectSum(space2, jac.n)
    basis = _block_basis(total)
    images = [right_leg_apply(jac, vector) for vector in basis]

    if compress is None:
        compress = not jac.is_constant()
    if not compress:
        columns = [total.coordinates(image) for image in images]
        return OperatorMatrix(total, total, exact_linalg.transpose(columns))

    size = space2.dimension
    form = [[total.inner(image, vector) for image in images] for vector in basis]
    gram_inverse = exact_linalg.inverse(space2.gram)
    compressed: exact_linalg.Matrix = []
    for block in range(jac.n):
        rows = form[block * size : (block + 1) * size]
        compressed.extend(exact_linalg.matmul(gram_inverse, rows))
    LOGGER.debug(f"Right-leg action compressed onto {total!r}")
    return OperatorMatrix(total, total, compressed)


def right_leg_form(operator: OperatorMatrix) -> np.ndarray:
    """F[b][a] = <R e_a, e_b> in the block tensor metric"""
    return operator.domain.gram_array() @ operator.array


@attr.s(frozen=True, slots=True)
class CdCertificate:
    """Smallest eigenvalue of the symmetrized right-leg form at a truncation degree"""

    min_eigenvalue: float = attr.ib()
    threshold: float = attr.ib()
    degree: int = attr.ib()
    tolerance: float = attr.ib()

    @property
    def passed(self) -> bool:
        return self.min_eigenvalue >= self.threshold - self.tolerance

    @property
    def label(self) -> str:
        return f"numeric certificate at degree {self.degree}"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "min_eigenvalue": self.min_eigenvalue,
            "threshold": self.threshold,
            "degree": self.degree,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "label": self.label,
        }


def _min_form_eigenvalue(operator: OperatorMatrix) -> float:
    form = right_leg_form(operator)
    try:
        values = scipy.linalg.eigh(
            (form + form.T) / 2, operator.domain.gram_array(), eigvals_only=True
        )
    except (np.linalg.LinAlgError, ValueError) as err:
        raise EigensolverFailure(f"Curvature eigensolve failed: {err}") from err
    return float(values[0])


def cd_certificate(
    jac: JacobianTensor,
    space2: TensorSpace,
    threshold: float = 1.0,
    tol: float = DEFAULT_EIGEN_TOLERANCE,
) -> CdCertificate:
    """min <R_J eta, eta> / ||eta||^2 over the truncated direct sum"""
    operator = right_leg_matrix(jac, space2)
    certificate = CdCertificate(_min_form_eigenvalue(operator), threshold, space2.degree, tol)
    LOGGER.info(
        f"CD certificate: min eigenvalue {certificate.min_eigenvalue:.12g} "
        f"({certificate.label}, passed={certificate.passed})"
    )
    return certificate


@attr.s(frozen=True, slots=True)
class BrascampLieb:
    """Var(Y) <= <R_J^-1 dY, dY> <= E(Y) / c"""

    variance: float = attr.ib()
    bl_value: float = attr.ib()
    plain_bound: float = attr.ib()
    curvature: float = attr.ib()
    tolerance: float = attr.ib()

    @property
    def ordered(self) -> bool:
        return (
            self.variance <= self.bl_value + self.tolerance
            and self.bl_value <= self.plain_bound + self.tolerance
        )

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.variance, self.bl_value, self.plain_bound


def bl_bound(
    y: NcPoly,
    jac: JacobianTensor,
    space2: TensorSpace,
    tol: float = DEFAULT_EIGEN_TOLERANCE,
) -> BrascampLieb:
    """Variance, Brascamp-Lieb value and plain Poincare bound of Y"""
    model = space2.model
    gradient = [fdq(i, y) for i in range(1, y.n + 1)]
    if any(not space2.fits(component) for component in gradient):
        raise DegreeOverflow(f"Gradient of a degree {y.degree()} polynomial exceeds {space2!r}")

    operator = right_leg_matrix(jac, space2)
    curvature = _min_form_eigenvalue(operator)
    if curvature <= tol:
        raise exact_linalg.SingularMatrix(
            f"Right-leg action is not invertible (min eigenvalue {curvature})"
        )
    total = operator.domain
    vector = np.array([float(entry) for entry in total.coordinates(gradient)])
    preimage = np.linalg.solve(operator.array, vector)
    bl_value = float(preimage @ total.gram_array() @ vector)

    energy = float(
        sum((tensor_inner(component, component, model) for component in gradient), Fraction(0))
    )
    result = BrascampLieb(
        variance=float(variance(y, model)),
        bl_value=bl_value,
        plain_bound=energy / curvature,
        curvature=curvature,
        tolerance=tol,
    )
    LOGGER.debug(f"Brascamp-Lieb for {y}: {result.as_tuple()}")
    return result


def fisher_information(xi: Sequence[NcPoly], model: CovarianceModel) -> Fraction:
    """sum_i ||xi_i||^2"""
    return sum((norm_squared(component, model) for component in xi), Fraction(0))


def cramer_rao_gap(xi: Sequence[NcPoly], model: CovarianceModel) -> Fraction:
    """Phi* sum_i tau(X_i^2) - n^2; zero iff xi is proportional to X"""
    n = model.n
    second_moment = sum((model.entry(i, i) for i in range(1, n + 1)), Fraction(0))
    return fisher_information(xi, model) * second_moment - n * n


def clark_ocone_difference(
    j: int, xi: Sequence[NcPoly], jac: JacobianTensor, model: CovarianceModel
) -> NcPoly:
    """xi_j - tau(xi_j) - (id (x) tau)[sum_i (X_i (x) 1) d_j xi_i - d_j xi_i (1 (x) X_i)]"""
    n = len(xi)
    one = NcPoly.one(n)
    total = TensorPoly2.zero(n)
    for i in range(1, n + 1):
        generator = NcPoly.generator(i, n)
        entry = jac.entry(i, j)
        total = total + bimodule_act(generator, entry, one) - bimodule_act(one, entry, generator)
    return xi[j - 1] - trace(xi[j - 1], model) - slice_right(total, model)


def clark_ocone_residual(
    j: int, xi: Sequence[NcPoly], jac: JacobianTensor, model: CovarianceModel
) -> Fraction:
    """Squared L2 norm of the Clark-Ocone difference; zero for conjugates of a potential"""
    return norm_squared(clark_ocone_difference(j, xi, jac, model), model)


@attr.s(frozen=True, slots=True)
class SosResult:
    """J - c (1 (x) 1) I_n compared with Q* Q"""

    threshold: Fraction = attr.ib()
    exact: bool = attr.ib()
    residual_terms: int = attr.ib()


def sos_certificate(jac: JacobianTensor, witness: JacobianTensor, threshold: Any) -> SosResult:
    """Exact check that J - c I = Q* # Q for a supplied witness Q"""
    c = Fraction(threshold)
    product = matrix_sharp(matrix_star(witness), witness)
    unit = TensorPoly2.unit(jac.n)
    residual_terms = 0
    for i in range(jac.n):
        for k in range(jac.n):
            target = jac.entries[i][k] - (unit.scale(c) if i == k else TensorPoly2.zero(jac.n))
            residual_terms += len(target - product.entries[i][k])
    result = SosResult(c, residual_terms == 0, residual_terms)
    LOGGER.info(f"Sum-of-squares witness at c={c}: exact={result.exact}")
    return result


def schwarz_suite(
    rng: np.random.Generator, n: int, count: int = 50, max_degree: int = 6
) -> Dict[str, int]:
    """Symmetry triple and Clark-Ocone identity on random self-adjoint potentials"""
    model = CovarianceModel.standard(n)
    failed = {"symmetries": 0, "clark_ocone": 0}
    for _ in range(count):
        spec = PotentialSpec(random_self_adjoint(rng, n, max_degree))
        xi = conjugates_from_potential(spec)
        jac = jacobian(xi)
        if not jac.check_symmetries().passed:
            failed["symmetries"] += 1
        if any(clark_ocone_difference(j, xi, jac, model) for j in range(1, n + 1)):
            failed["clark_ocone"] += 1
    LOGGER.info(f"Jacobian suite over {count} potentials, n={n}: failures {failed}")
    return failed
