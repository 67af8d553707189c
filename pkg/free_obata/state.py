"""
The trace of a free semicircular family with prescribed covariance.

For a covariance matrix C the moments of X1, ..., Xn are given by the Wick
formula over non-crossing pairings:

    tau(X_{i1} ... X_{i2m}) = sum over non-crossing pair partitions pi of
                              prod_{(a, b) in pi} C[i_a][i_b]

Odd words have trace zero and the empty word has trace one.  The sum is
evaluated by pairing the first letter with every admissible partner, which
splits the word into an inner and an outer part, and memoizing subwords.

Inner products follow <x, y> = tau(y* x) on polynomials and are taken legwise
on the tensor powers, the opposite algebra leg being identified with L^2 by
traciality.
"""
from fractions import Fraction
import logging
import threading
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import attr

from . import exact_linalg
from .calculus import fdq
from .ncpoly import (
    GeneratorMismatch,
    NcPoly,
    TensorPoly2,
    TensorPoly3,
    Word,
    check_index,
    format_coefficient,
)

LOGGER = logging.getLogger(__name__)

FrozenMatrix = Tuple[Tuple[Fraction, ...], ...]


def canonical_rotation(word: Word) -> Word:
    """Smallest representative of a word under cyclic rotation and reversal

    Both are symmetries of the trace for real self-adjoint generators.
    """
    candidates = []
    for base in (word, word[::-1]):
        candidates.extend(base[k:] + base[:k] for k in range(len(base)))
    return min(candidates) if candidates else word


@attr.s(slots=True, repr=False)
class PairingCache:
    """Memo table from canonical words to traces, safe for concurrent readers"""

    _table: Dict[Word, Fraction] = attr.ib(factory=dict)
    _lock: threading.Lock = attr.ib(factory=threading.Lock)
    hits: int = attr.ib(default=0)
    misses: int = attr.ib(default=0)

    def get(self, key: Word) -> Optional[Fraction]:
        with self._lock:
            value = self._table.get(key)
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
            return value

    def put(self, key: Word, value: Fraction) -> None:
        with self._lock:
            self._table.setdefault(key, value)

    def __len__(self) -> int:
        return len(self._table)

    def __repr__(self) -> str:
        return f"PairingCache(entries={len(self)}, hits={self.hits}, misses={self.misses})"


def _freeze_matrix(rows: Sequence[Sequence[Any]]) -> FrozenMatrix:
    return tuple(tuple(Fraction(entry) for entry in row) for row in rows)


@attr.s(frozen=True, slots=True, eq=False)
class CovarianceModel:
    """Covariance C of a free semicircular family fixing the trace tau"""

    n: int = attr.ib()
    covariance: FrozenMatrix = attr.ib(converter=_freeze_matrix)
    cache: PairingCache = attr.ib(factory=PairingCache, repr=False)

    @covariance.validator
    def _validate_covariance(self, _: attr.Attribute, covariance: FrozenMatrix) -> None:
        """C must be an n x n symmetric positive definite rational matrix"""
        if len(covariance) != self.n or any(len(row) != self.n for row in covariance):
            raise ValueError(f"Covariance must be {self.n}x{self.n}")
        try:
            exact_linalg.ldlt([list(row) for row in covariance])
        except exact_linalg.NotPositiveDefinite as err:
            raise exact_linalg.NotPositiveDefinite(
                f"Covariance is not symmetric positive definite: {err}"
            ) from err

    def __eq__(self, other) -> bool:
        if not isinstance(other, CovarianceModel):
            return NotImplemented
        return self.n == other.n and self.covariance == other.covariance

    def __ne__(self, other) -> bool:
        return not self.__eq__(other)

    def __hash__(self) -> int:
        return hash((self.n, self.covariance))

    @classmethod
    def standard(cls, n: int) -> "CovarianceModel":
        """The standard semicircular family, C = I"""
        return cls(n, exact_linalg.identity(n))

    @classmethod
    def from_quadratic_form(cls, quadratic_form: Sequence[Sequence[Any]]) -> "CovarianceModel":
        """The model of the potential 1/2 <X, AX>, i.e. C = A^-1"""
        matrix = exact_linalg.to_fraction_matrix(quadratic_form)
        try:
            exact_linalg.ldlt(matrix)
        except exact_linalg.NotPositiveDefinite as err:
            raise exact_linalg.NotPositiveDefinite(
                f"Quadratic form is not symmetric positive definite: {err}"
            ) from err
        return cls(len(matrix), exact_linalg.inverse(matrix))

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "CovarianceModel":
        """Build from {"n": int, "C": [[rational strings]]}"""
        return cls(int(obj["n"]), [[Fraction(str(entry)) for entry in row] for row in obj["C"]])

    def to_json(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "C": [[format_coefficient(entry) for entry in row] for row in self.covariance],
        }

    def entry(self, i: int, j: int) -> Fraction:
        """C[i][j] with 1-based generator indices"""
        return self.covariance[i - 1][j - 1]

    def precision(self) -> exact_linalg.Matrix:
        """A = C^-1"""
        return exact_linalg.inverse([list(row) for row in self.covariance])

    def conjugates(self) -> List[NcPoly]:
        """The linear conjugate system xi = C^-1 X of this model"""
        precision = self.precision()
        return [
            NcPoly(self.n, {(j + 1,): precision[i][j] for j in range(self.n)})
            for i in range(self.n)
        ]

    def is_standard(self) -> bool:
        return self.covariance == _freeze_matrix(exact_linalg.identity(self.n))


def _check_model(n: int, model: CovarianceModel) -> None:
    if n != model.n:
        raise GeneratorMismatch(f"Polynomial over {n} generators, model over {model.n}")


def _pair_first_letter(word: Word, model: CovarianceModel) -> Fraction:
    total = Fraction(0)
    first = word[0]
    for partner in range(1, len(word), 2):
        weight = model.entry(first, word[partner])
        if not weight:
            continue
        inner = trace_word(word[1:partner], model)
        if not inner:
            continue
        total += weight * inner * trace_word(word[partner + 1 :], model)
    return total


def trace_word(word: Word, model: CovarianceModel) -> Fraction:
    """tau of a single word through non-crossing pairings"""
    if len(word) % 2:
        return Fraction(0)
    if not word:
        return Fraction(1)
    for letter in word:
        check_index(letter, model.n)

    key = canonical_rotation(tuple(word))
    cached = model.cache.get(key)
    if cached is not None:
        return cached

    value = _pair_first_letter(key, model)
    model.cache.put(key, value)
    return value


def trace(p: NcPoly, model: CovarianceModel) -> Fraction:
    _check_model(p.n, model)
    return sum((coef * trace_word(word, model) for word, coef in p.terms.items()), Fraction(0))


def inner_words(u: Word, v: Word, model: CovarianceModel) -> Fraction:
    """<u, v> = tau(v* u) for words"""
    return trace_word(v[::-1] + u, model)


def inner(p: NcPoly, q: NcPoly, model: CovarianceModel) -> Fraction:
    """<p, q> = tau(q* p)"""
    _check_model(p.n, model)
    _check_model(q.n, model)
    return sum(
        (
            p_coef * q_coef * inner_words(u, v, model)
            for u, p_coef in p.terms.items()
            for v, q_coef in q.terms.items()
        ),
        Fraction(0),
    )


def norm_squared(p: NcPoly, model: CovarianceModel) -> Fraction:
    return inner(p, p, model)


Tensor = Union[TensorPoly2, TensorPoly3]


def tensor_inner(first: Tensor, second: Tensor, model: CovarianceModel) -> Fraction:
    """Product of legwise inner products, extended bilinearly"""
    if first.RANK != second.RANK:
        raise ValueError(f"Tensor rank mismatch: {first.RANK} != {second.RANK}")
    _check_model(first.n, model)
    _check_model(second.n, model)
    total = Fraction(0)
    for first_key, first_coef in first.terms.items():
        for second_key, second_coef in second.terms.items():
            product = first_coef * second_coef
            for u, v in zip(first_key, second_key):
                if not product:
                    break
                product *= inner_words(u, v, model)
            total += product
    return total


def tensor_norm_squared(tensor: Tensor, model: CovarianceModel) -> Fraction:
    return tensor_inner(tensor, tensor, model)


def tensor_trace(tensor: Tensor, model: CovarianceModel) -> Fraction:
    """tau (x) tau (x) ... applied to a tensor"""
    total = Fraction(0)
    for key, coef in tensor.terms.items():
        product = coef
        for word in key:
            product *= trace_word(word, model)
        total += product
    return total


def slice_left(tensor: TensorPoly2, model: CovarianceModel) -> NcPoly:
    """(tau (x) id)(a (x) b) = tau(a) b"""
    terms: Dict[Word, Fraction] = {}
    for (u, v), coef in tensor.terms.items():
        weight = trace_word(u, model)
        if weight:
            terms[v] = terms.get(v, 0) + coef * weight
    return NcPoly(tensor.n, terms)


def slice_right(tensor: TensorPoly2, model: CovarianceModel) -> NcPoly:
    """(id (x) tau)(a (x) b) = a tau(b)"""
    terms: Dict[Word, Fraction] = {}
    for (u, v), coef in tensor.terms.items():
        weight = trace_word(v, model)
        if weight:
            terms[u] = terms.get(u, 0) + coef * weight
    return NcPoly(tensor.n, terms)


def centered(p: NcPoly, model: CovarianceModel) -> NcPoly:
    """p - tau(p) 1"""
    return p - trace(p, model)


def variance(p: NcPoly, model: CovarianceModel) -> Fraction:
    """||p - tau(p) 1||^2"""
    return norm_squared(centered(p, model), model)


def conjugate_relation_residual(
    i: int, xi: NcPoly, p: NcPoly, model: CovarianceModel
) -> Fraction:
    """tau(xi_i P) - tau (x) tau(d_i P); zero when xi_i is conjugate to X_i along P"""
    check_index(i, model.n)
    return trace(xi * p, model) - tensor_trace(fdq(i, p), model)


def gram_matrix(words: Sequence[Word], model: CovarianceModel) -> exact_linalg.Matrix:
    """G[a][b] = <w_a, w_b>"""
    size = len(words)
    gram = exact_linalg.zeros(size, size)
    for a in range(size):
        for b in range(a, size):
            gram[a][b] = gram[b][a] = inner_words(words[a], words[b], model)
    LOGGER.debug(f"Gram matrix of size {size}, cache {model.cache!r}")
    return gram
