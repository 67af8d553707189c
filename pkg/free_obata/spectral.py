"""
Finite-dimensional realizations of the free Laplacian and its relatives.

A TruncatedSpace is the span of all words of length <= d with the exact Gram
matrix of the model.  When the conjugate system is linear the Laplacian

    Delta = sum_i d_i* d_i,   d_i*(p (x) q) = p xi_i q - p (tau (x) id)(d_i q)
                                              - (id (x) tau)(d_i p) q

does not raise degrees, so its matrix on a truncated space is exact.  The
same holds for the tensor Laplacian Delta (x) id + id (x) Delta on word pairs
of bounded total degree.

Exact matrices are rational; spectra are computed in floating point from the
symmetric-definite pencil (G L, G) with scipy.linalg.eigh.
"""
from fractions import Fraction
import logging
from typing import Dict, List, Sequence, Tuple

import attr
import numpy as np
import scipy.linalg

from . import exact_linalg
from .calculus import Leg, fdq, tensor_fdq
from .ncpoly import NcPoly, TensorPoly2, Word, check_index, mul, sharp2
from .state import (
    CovarianceModel,
    gram_matrix,
    inner_words,
    norm_squared,
    slice_left,
    slice_right,
    tensor_inner,
    tensor_norm_squared,
    trace_word,
)

LOGGER = logging.getLogger(__name__)

DEFAULT_EIGEN_TOLERANCE = 1e-8


class DegreeOverflow(ValueError):
    """Raised when a polynomial does not fit into a truncated space"""


class NonlinearConjugates(ValueError):
    """Raised when an operator matrix is requested for conjugates of degree > 1"""


class IdentityViolation(RuntimeError):
    """Raised when two exact constructions that must agree do not"""


class EigensolverFailure(RuntimeError):
    """Raised when the floating point eigensolver does not converge"""


def all_words(n: int, degree: int) -> List[Word]:
    """All words of length <= degree, ordered by length then lexicographically"""
    words: List[Word] = [()]
    level: List[Word] = [()]
    for _ in range(degree):
        level = [word + (letter,) for word in level for letter in range(1, n + 1)]
        words.extend(level)
    return words


def all_word_pairs(n: int, degree: int) -> List[Tuple[Word, Word]]:
    """All pairs of words of total length <= degree"""
    words = all_words(n, degree)
    return sorted(
        ((u, v) for u in words for v in words if len(u) + len(v) <= degree),
        key=lambda pair: (len(pair[0]) + len(pair[1]), len(pair[0]), pair),
    )


def basis_size(n: int, degree: int) -> int:
    if n == 1:
        return degree + 1
    return (n ** (degree + 1) - 1) // (n - 1)


@attr.s(frozen=True, slots=True, repr=False)
class TruncatedSpace:
    """Words of length <= degree with the exact Gram matrix of the model"""

    model: CovarianceModel = attr.ib()
    degree: int = attr.ib()
    basis: Tuple[Word, ...] = attr.ib(converter=tuple)
    gram: exact_linalg.Matrix = attr.ib(eq=False)
    index: Dict[Word, int] = attr.ib(eq=False)

    @degree.validator
    def _validate_degree(self, _: attr.Attribute, degree: int) -> None:
        if degree < 0:
            raise ValueError(f"Degree bound must be non-negative, got {degree}")

    @classmethod
    def build(cls, model: CovarianceModel, degree: int) -> "TruncatedSpace":
        basis = all_words(model.n, degree)
        gram = gram_matrix(basis, model)
        if not exact_linalg.is_positive_definite(gram):
            raise exact_linalg.NotPositiveDefinite("Gram matrix of the monomial basis is singular")
        LOGGER.debug(f"Truncated space n={model.n} d={degree} of dimension {len(basis)}")
        return cls(model, degree, basis, gram, {word: k for k, word in enumerate(basis)})

    def __repr__(self) -> str:
        return f"TruncatedSpace(n={self.n}, degree={self.degree}, dimension={self.dimension})"

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def gram_array(self) -> np.ndarray:
        return exact_linalg.to_array(self.gram)

    def coordinates(self, p: NcPoly) -> List[Fraction]:
        """Coefficient vector of p in the monomial basis"""
        if p.degree() > self.degree:
            raise DegreeOverflow(f"Degree {p.degree()} exceeds truncation {self.degree}")
        vector = [Fraction(0)] * self.dimension
        for word, coef in p.terms.items():
            vector[self.index[word]] = coef
        return vector

    def polynomial(self, vector: Sequence[Fraction]) -> NcPoly:
        return NcPoly(self.n, {self.basis[k]: coef for k, coef in enumerate(vector) if coef})

    def unit_vector(self) -> np.ndarray:
        vector = np.zeros(self.dimension)
        vector[self.index[()]] = 1.0
        return vector

    def trace_row(self) -> np.ndarray:
        """tau(b_k) for every basis word, i.e. <b_k, 1>"""
        return np.array([float(trace_word(word, self.model)) for word in self.basis])

    def g_norm(self, vector: np.ndarray) -> float:
        return float(np.sqrt(max(vector @ self.gram_array() @ vector, 0.0)))


@attr.s(frozen=True, slots=True, repr=False)
class TensorSpace:
    """Word pairs of total length <= degree; the Gram matrix is the legwise product"""

    model: CovarianceModel = attr.ib()
    degree: int = attr.ib()
    basis: Tuple[Tuple[Word, Word], ...] = attr.ib(converter=tuple)
    gram: exact_linalg.Matrix = attr.ib(eq=False)
    index: Dict[Tuple[Word, Word], int] = attr.ib(eq=False)

    @classmethod
    def build(cls, model: CovarianceModel, degree: int) -> "TensorSpace":
        basis = all_word_pairs(model.n, degree)
        size = len(basis)
        gram = exact_linalg.zeros(size, size)
        for a in range(size):
            for b in range(a, size):
                (u, v), (x, y) = basis[a], basis[b]
                gram[a][b] = gram[b][a] = inner_words(u, x, model) * inner_words(v, y, model)
        LOGGER.debug(f"Tensor space n={model.n} d={degree} of dimension {size}")
        return cls(model, degree, basis, gram, {pair: k for k, pair in enumerate(basis)})

    def __repr__(self) -> str:
        return f"TensorSpace(n={self.n}, degree={self.degree}, dimension={self.dimension})"

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def gram_array(self) -> np.ndarray:
        return exact_linalg.to_array(self.gram)

    def fits(self, tensor: TensorPoly2) -> bool:
        return tensor.degree() <= self.degree

    def coordinates(self, tensor: TensorPoly2) -> List[Fraction]:
        if not self.fits(tensor):
            raise DegreeOverflow(f"Tensor degree {tensor.degree()} exceeds {self.degree}")
        vector = [Fraction(0)] * self.dimension
        for key, coef in tensor.terms.items():
            vector[self.index[key]] = coef
        return vector


@attr.s(frozen=True, slots=True, repr=False)
class OperatorMatrix:
    """An exact rational matrix acting on coordinates; columns are images of basis vectors"""

    domain: object = attr.ib()
    codomain: object = attr.ib()
    rational: exact_linalg.Matrix = attr.ib(eq=False)
    _shadow: Dict[str, np.ndarray] = attr.ib(factory=dict, eq=False)

    @rational.validator
    def _validate_shape(self, _: attr.Attribute, rational: exact_linalg.Matrix) -> None:
        rows = _dimension(self.codomain)
        cols = _dimension(self.domain)
        if len(rational) != rows or any(len(row) != cols for row in rational):
            raise ValueError(f"Operator matrix must be {rows}x{cols}")

    def __repr__(self) -> str:
        return f"OperatorMatrix({_dimension(self.codomain)}x{_dimension(self.domain)})"

    @property
    def array(self) -> np.ndarray:
        """Floating point shadow, computed once"""
        if "array" not in self._shadow:
            self._shadow["array"] = exact_linalg.to_array(self.rational)
        return self._shadow["array"]

    def apply(self, vector: Sequence[Fraction]) -> List[Fraction]:
        return exact_linalg.matvec(self.rational, vector)


def _dimension(space) -> int:
    return space if isinstance(space, int) else space.dimension


def require_linear(xi: Sequence[NcPoly]) -> None:
    """Only conjugate systems of degree <= 1 have exact truncated operators"""
    worst = max((p.degree() for p in xi), default=-1)
    if worst > 1:
        raise NonlinearConjugates(
            f"Conjugate system has degree {worst}; operator matrices need degree <= 1"
        )


def adjoint_fdq(
    i: int, tensor: TensorPoly2, xi: Sequence[NcPoly], model: CovarianceModel
) -> NcPoly:
    """d_i*(p (x) q) = p xi_i q - p (tau (x) id)(d_i q) - (id (x) tau)(d_i p) q"""
    check_index(i, tensor.n)
    if len(xi) != tensor.n:
        raise ValueError(f"Expected {tensor.n} conjugate variables, got {len(xi)}")
    n = tensor.n
    terms: Dict[Word, Fraction] = {}

    def add(poly: NcPoly, coef: Fraction) -> None:
        for word, value in poly.terms.items():
            terms[word] = terms.get(word, 0) + coef * value

    for (u, v), coef in tensor.terms.items():
        left = NcPoly.from_word(u, n)
        right = NcPoly.from_word(v, n)
        add(mul(mul(left, xi[i - 1]), right), coef)
        add(mul(left, slice_left(fdq(i, right), model)), -coef)
        add(mul(slice_right(fdq(i, left), model), right), -coef)
    return NcPoly(n, terms)


def laplacian_poly(p: NcPoly, xi: Sequence[NcPoly], model: CovarianceModel) -> NcPoly:
    """Symbolic Delta p = sum_i d_i* d_i p"""
    total = NcPoly.zero(p.n)
    for i in range(1, p.n + 1):
        total = total + adjoint_fdq(i, fdq(i, p), xi, model)
    return total


def tensor_laplacian_poly(
    tensor: TensorPoly2, xi: Sequence[NcPoly], model: CovarianceModel
) -> TensorPoly2:
    """Symbolic (Delta (x) id + id (x) Delta) on a tensor"""
    n = tensor.n
    total = TensorPoly2.zero(n)
    for (u, v), coef in tensor.terms.items():
        left = NcPoly.from_word(u, n)
        right = NcPoly.from_word(v, n)
        total = total + TensorPoly2.simple(laplacian_poly(left, xi, model), right).scale(coef)
        total = total + TensorPoly2.simple(left, laplacian_poly(right, xi, model)).scale(coef)
    return total


def energy_matrix(space: TruncatedSpace) -> exact_linalg.Matrix:
    """E[a][b] = sum_i <d_i b_a, d_i b_b>, the Dirichlet form on the basis"""
    n = space.n
    gradients = [
        [fdq(i, NcPoly.from_word(word, n)) for i in range(1, n + 1)] for word in space.basis
    ]
    size = space.dimension
    energy = exact_linalg.zeros(size, size)
    for a in range(size):
        for b in range(a, size):
            value = sum(
                (tensor_inner(gradients[a][i], gradients[b][i], space.model) for i in range(n)),
                Fraction(0),
            )
            energy[a][b] = energy[b][a] = value
    return energy


def laplacian(
    space: TruncatedSpace, xi: Sequence[NcPoly], cross_check: bool = True
) -> OperatorMatrix:
    """Matrix of Delta on the truncated space, built through the adjoint formula

    The Gram-side construction G L = E is checked exactly unless cross_check
    is disabled.
    """
    require_linear(xi)
    size = space.dimension
    columns = [
        space.coordinates(laplacian_poly(NcPoly.from_word(word, space.n), xi, space.model))
        for word in space.basis
    ]
    matrix = exact_linalg.transpose(columns)

    if cross_check:
        if exact_linalg.matmul(space.gram, matrix) != energy_matrix(space):
            raise IdentityViolation("Dirichlet identity <Delta Y, Z> = sum <d Y, d Z> violated")
        LOGGER.debug(f"Laplacian of size {size} agrees with the Dirichlet form")
    return OperatorMatrix(space, space, matrix)


def tensor_laplacian(space2: TensorSpace, xi: Sequence[NcPoly]) -> OperatorMatrix:
    """Matrix of Delta (x) id + id (x) Delta on word pairs of bounded total degree"""
    require_linear(xi)
    columns = [
        space2.coordinates(
            tensor_laplacian_poly(TensorPoly2(space2.n, {pair: 1}), xi, space2.model)
        )
        for pair in space2.basis
    ]
    return OperatorMatrix(space2, space2, exact_linalg.transpose(columns))


def dirichlet_energy(y: NcPoly, space: TruncatedSpace) -> Fraction:
    """sum_i ||d_i Y||^2"""
    if y.degree() > space.degree:
        raise DegreeOverflow(f"Degree {y.degree()} exceeds truncation {space.degree}")
    return sum(
        (tensor_norm_squared(fdq(i, y), space.model) for i in range(1, y.n + 1)), Fraction(0)
    )


def dirichlet_form(y: NcPoly, z: NcPoly, model: CovarianceModel) -> Fraction:
    """sum_i <d_i Y, d_i Z>"""
    return sum((tensor_inner(fdq(i, y), fdq(i, z), model) for i in range(1, y.n + 1)), Fraction(0))


def energy2(y: NcPoly, space: TruncatedSpace, xi: Sequence[NcPoly]) -> Fraction:
    """sum_i <Delta(x)(d_i Y), d_i Y>, checked against the squared second quotients"""
    if y.degree() > space.degree:
        raise DegreeOverflow(f"Degree {y.degree()} exceeds truncation {space.degree}")
    model = space.model
    n = y.n
    via_laplacian = Fraction(0)
    via_quotients = Fraction(0)
    for i in range(1, n + 1):
        grad = fdq(i, y)
        via_laplacian += tensor_inner(tensor_laplacian_poly(grad, xi, model), grad, model)
        for j in range(1, n + 1):
            via_quotients += tensor_norm_squared(tensor_fdq(j, Leg.LEFT, grad), model)
            via_quotients += tensor_norm_squared(tensor_fdq(j, Leg.RIGHT, grad), model)
    if via_laplacian != via_quotients:
        raise IdentityViolation(
            f"Tensor Dirichlet identity violated: {via_laplacian} != {via_quotients}"
        )
    return via_laplacian


def tensor_dirichlet_residual(
    first: TensorPoly2, second: TensorPoly2, xi: Sequence[NcPoly], model: CovarianceModel
) -> Fraction:
    """<Delta(x) U, V> - sum_j <(d_j (x) id)U, (d_j (x) id)V> + <(id (x) d_j)U, (id (x) d_j)V>"""
    lhs = tensor_inner(tensor_laplacian_poly(first, xi, model), second, model)
    rhs = Fraction(0)
    for j in range(1, first.n + 1):
        for side in Leg:
            rhs += tensor_inner(tensor_fdq(j, side, first), tensor_fdq(j, side, second), model)
    return lhs - rhs


@attr.s(frozen=True, slots=True)
class EigenCluster:
    """Eigenvalues equal within tolerance, with G-orthonormal eigenvectors as columns"""

    value: float = attr.ib()
    multiplicity: int = attr.ib()
    vectors: np.ndarray = attr.ib(eq=False, repr=False)


def _generalized_eigh(form: np.ndarray, gram: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Symmetric-definite pencil through congruence to standard form"""
    try:
        return scipy.linalg.eigh((form + form.T) / 2, gram)
    except (np.linalg.LinAlgError, ValueError) as err:
        raise EigensolverFailure(f"Generalized eigensolve failed: {err}") from err


def cluster_eigenvalues(
    values: np.ndarray, vectors: np.ndarray, tol: float = DEFAULT_EIGEN_TOLERANCE
) -> List[EigenCluster]:
    clusters: List[EigenCluster] = []
    start = 0
    for stop in range(1, len(values) + 1):
        if stop == len(values) or values[stop] - values[stop - 1] > max(
            tol, tol * abs(values[stop])
        ):
            block = values[start:stop]
            clusters.append(
                EigenCluster(float(np.mean(block)), stop - start, vectors[:, start:stop])
            )
            start = stop
    return clusters


def spectrum(
    space: TruncatedSpace, xi: Sequence[NcPoly], tol: float = DEFAULT_EIGEN_TOLERANCE
) -> List[EigenCluster]:
    """Clustered spectrum of Delta on the truncated space"""
    operator = laplacian(space, xi)
    gram = space.gram_array()
    values, vectors = _generalized_eigh(gram @ operator.array, gram)
    clusters = cluster_eigenvalues(values, vectors, tol)
    LOGGER.debug(f"Spectrum: {[(c.value, c.multiplicity) for c in clusters]}")
    return clusters


def centered_basis(space: TruncatedSpace) -> np.ndarray:
    """Columns spanning the G-orthogonal complement of the unit: b_k - tau(b_k) 1"""
    unit = space.index[()]
    traces = space.trace_row()
    columns = []
    for k in range(space.dimension):
        if k == unit:
            continue
        column = np.zeros(space.dimension)
        column[k] = 1.0
        column[unit] -= traces[k]
        columns.append(column)
    return np.array(columns).T if columns else np.zeros((space.dimension, 0))


def centered_spectrum(
    space: TruncatedSpace, xi: Sequence[NcPoly], tol: float = DEFAULT_EIGEN_TOLERANCE
) -> List[EigenCluster]:
    """Spectrum of Delta restricted to centered vectors; eigenvectors in full coordinates"""
    operator = laplacian(space, xi)
    gram = space.gram_array()
    projection = centered_basis(space)
    form = projection.T @ gram @ operator.array @ projection
    reduced_gram = projection.T @ gram @ projection
    values, vectors = _generalized_eigh(form, reduced_gram)
    return cluster_eigenvalues(values, projection @ vectors, tol)


@attr.s(frozen=True, slots=True)
class PoincareResult:
    """Best constant 1/lambda_1 and the minimizing centered vector"""

    constant: float = attr.ib()
    gap: float = attr.ib()
    minimizer: np.ndarray = attr.ib(eq=False, repr=False)
    coarse_bound: float = attr.ib()


def coarse_poincare_bound(model: CovarianceModel) -> float:
    """4n max ||X_i||^2 with ||X_i|| = 2 sqrt(C_ii)"""
    return 4 * model.n * max(4 * float(model.entry(i, i)) for i in range(1, model.n + 1))


def poincare_constant(
    space: TruncatedSpace, xi: Sequence[NcPoly], tol: float = DEFAULT_EIGEN_TOLERANCE
) -> PoincareResult:
    """1 / min over centered f of E(f) / ||f||^2"""
    clusters = centered_spectrum(space, xi, tol)
    if not clusters:
        raise EigensolverFailure("No centered vectors in a degree 0 space")
    first = clusters[0]
    if first.value <= tol:
        raise EigensolverFailure(f"Laplacian has a centered kernel vector ({first.value})")
    minimizer = first.vectors[:, 0]
    result = PoincareResult(
        1.0 / first.value, first.value, minimizer, coarse_poincare_bound(space.model)
    )
    LOGGER.info(f"Poincare constant {result.constant:.12g} (gap {result.gap:.12g})")
    return result


def _g_operator_norm(matrix: np.ndarray, gram: np.ndarray) -> float:
    """Operator norm of a coordinate matrix in the G-metric"""
    factor = np.linalg.cholesky(gram)
    conjugated = factor.T @ matrix @ np.linalg.inv(factor.T)
    return float(np.linalg.norm(conjugated, 2))


def resolvent(alpha: float, operator: OperatorMatrix) -> OperatorMatrix:
    """eta_alpha = alpha (alpha + L)^-1, computed exactly for the rational value of alpha"""
    if alpha <= 0:
        raise ValueError(f"Resolvent parameter must be positive, got {alpha}")
    alpha_q = Fraction(alpha)
    size = len(operator.rational)
    shifted = [
        [alpha_q * int(i == j) + operator.rational[i][j] for j in range(size)] for i in range(size)
    ]
    try:
        inverse = exact_linalg.inverse(shifted)
    except exact_linalg.SingularMatrix as err:
        raise AssertionError(f"alpha + Delta is singular for alpha={alpha}") from err
    scaled = [[alpha_q * entry for entry in row] for row in inverse]
    return OperatorMatrix(operator.domain, operator.codomain, scaled)


@attr.s(frozen=True, slots=True)
class ResolventCheck:
    alpha: float = attr.ib()
    unital: float = attr.ib()
    tracial: float = attr.ib()
    norm: float = attr.ib()
    defect_norm: float = attr.ib()

    def passed(self, tol: float) -> bool:
        return (
            self.unital <= tol
            and self.tracial <= tol
            and self.norm <= 1 + tol
            and self.defect_norm <= 2 + tol
        )


def resolvent_properties(
    alpha: float, operator: OperatorMatrix, space: TruncatedSpace
) -> ResolventCheck:
    """Unitality, trace preservation, L^2 contraction and ||x - eta x|| <= 2||x||"""
    eta = resolvent(alpha, operator).array
    gram = space.gram_array()
    unit = space.unit_vector()
    traces = space.trace_row()
    return ResolventCheck(
        alpha=alpha,
        unital=float(np.max(np.abs(eta @ unit - unit))),
        tracial=float(np.max(np.abs(traces @ eta - traces))),
        norm=_g_operator_norm(eta, gram),
        defect_norm=_g_operator_norm(np.eye(len(unit)) - eta, gram),
    )


def heat_semigroup(t: float, operator: OperatorMatrix) -> np.ndarray:
    """phi_t = exp(-t Delta) in coordinates"""
    if t < 0:
        raise ValueError(f"Semigroup time must be non-negative, got {t}")
    return scipy.linalg.expm(-t * operator.array)


def resolvent_via_semigroup(
    alpha: float, operator: OperatorMatrix, space: TruncatedSpace
) -> np.ndarray:
    """alpha int_0^oo exp(-alpha t) phi_t dt through the eigendecomposition of the pencil

    On the G-orthonormal eigenbasis phi_t acts as exp(-t lambda), whose
    Laplace transform is alpha / (alpha + lambda).
    """
    gram = space.gram_array()
    values, vectors = _generalized_eigh(gram @ operator.array, gram)
    weights = alpha / (alpha + values)
    return vectors @ np.diag(weights) @ vectors.T @ gram


def almost_commutation_residual(
    i: int, x: NcPoly, xi: Sequence[NcPoly], model: CovarianceModel
) -> Fraction:
    """||d_i Delta x - Delta(x) d_i x - sum_j d_j x # d_i xi_j||^2, exactly zero in scope"""
    require_linear(xi)
    check_index(i, x.n)
    lhs = fdq(i, laplacian_poly(x, xi, model))
    rhs = tensor_laplacian_poly(fdq(i, x), xi, model)
    for j in range(1, x.n + 1):
        rhs = rhs + sharp2(fdq(j, x), fdq(i, xi[j - 1]))
    return tensor_norm_squared(lhs - rhs, model)


def curvature_contraction(y: NcPoly, jacobian_entries, model: CovarianceModel) -> Fraction:
    """C_xi(Y) = sum_{i,j} <d_j Y # d_i xi_j, d_i Y>; entries[j][i] = d_i xi_j"""
    n = y.n
    if len(jacobian_entries) != n or any(len(row) != n for row in jacobian_entries):
        raise ValueError(f"Jacobian must be {n}x{n}")
    grads = [fdq(i, y) for i in range(1, n + 1)]
    total = Fraction(0)
    for i in range(n):
        for j in range(n):
            total += tensor_inner(sharp2(grads[j], jacobian_entries[j][i]), grads[i], model)
    return total


def energy2_via_norm(
    y: NcPoly, xi: Sequence[NcPoly], jacobian_entries, model: CovarianceModel
) -> Fraction:
    """||Delta Y||^2 - C_xi(Y), equal to the second-gradient energy for every Y"""
    return norm_squared(laplacian_poly(y, xi, model), model) - curvature_contraction(
        y, jacobian_entries, model
    )
