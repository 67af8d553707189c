"""
Free difference quotients, cyclic gradients and second order quotients on the
free algebra, together with the algebraic identities they satisfy.

Everything here is purely symbolic: no trace is involved, so the functions
are exact and independent of any covariance model.
"""
from enum import Enum
from fractions import Fraction
import logging
from typing import Dict, Iterable, List, Tuple, Union

import attr
import numpy as np

from .ncpoly import (
    NcPoly,
    TensorPoly2,
    TensorPoly3,
    Word,
    bimodule_act,
    check_index,
    random_poly,
    random_self_adjoint,
    star,
)

LOGGER = logging.getLogger(__name__)


class Leg(str, Enum):
    """Tensor leg on which a difference quotient acts"""

    LEFT = "left"
    RIGHT = "right"


def _occurrences(word: Word, i: int) -> Iterable[int]:
    return (position for position, letter in enumerate(word) if letter == i)


def fdq(i: int, p: NcPoly) -> TensorPoly2:
    """The free difference quotient: w = u Xi v contributes u (x) v"""
    check_index(i, p.n)
    terms: Dict[Tuple[Word, ...], Fraction] = {}
    for word, coef in p.terms.items():
        for position in _occurrences(word, i):
            key = (word[:position], word[position + 1 :])
            terms[key] = terms.get(key, 0) + coef
    return TensorPoly2(p.n, terms)


def cyclic_grad(i: int, p: NcPoly) -> NcPoly:
    """The cyclic gradient: w = A Xi B contributes BA"""
    check_index(i, p.n)
    terms: Dict[Word, Fraction] = {}
    for word, coef in p.terms.items():
        for position in _occurrences(word, i):
            rotated = word[position + 1 :] + word[:position]
            terms[rotated] = terms.get(rotated, 0) + coef
    return NcPoly(p.n, terms)


def tensor_fdq(j: int, side: Union[Leg, str], tensor: TensorPoly2) -> TensorPoly3:
    """(d_j (x) id) or (id (x) d_j) applied to a tensor"""
    check_index(j, tensor.n)
    side = Leg(side)
    terms: Dict[Tuple[Word, ...], Fraction] = {}
    for (left, right), coef in tensor.terms.items():
        if side is Leg.LEFT:
            keys = ((left[:k], left[k + 1 :], right) for k in _occurrences(left, j))
        else:
            keys = ((left, right[:k], right[k + 1 :]) for k in _occurrences(right, j))
        for key in keys:
            terms[key] = terms.get(key, 0) + coef
    return TensorPoly3(tensor.n, terms)


def second_fdq_left(i: int, j: int, p: NcPoly) -> TensorPoly3:
    """(d_i (x) id) o d_j"""
    check_index(i, p.n)
    return tensor_fdq(i, Leg.LEFT, fdq(j, p))


def second_fdq_right(i: int, j: int, p: NcPoly) -> TensorPoly3:
    """(id (x) d_i) o d_j"""
    check_index(i, p.n)
    return tensor_fdq(i, Leg.RIGHT, fdq(j, p))


def _validate_components(instance, _: attr.Attribute, components: Tuple[TensorPoly2, ...]) -> None:
    if len(components) != instance.n:
        raise ValueError(f"Gradient needs exactly {instance.n} components, got {len(components)}")


@attr.s(frozen=True, slots=True)
class Gradient:
    """The vector of the n free difference quotients of a polynomial"""

    n: int = attr.ib()
    components: Tuple[TensorPoly2, ...] = attr.ib(converter=tuple, validator=_validate_components)

    def __getitem__(self, i: int) -> TensorPoly2:
        """1-based access matching the generator index"""
        check_index(i, self.n)
        return self.components[i - 1]

    def __iter__(self):
        return iter(self.components)


def gradient(p: NcPoly) -> Gradient:
    return Gradient(p.n, [fdq(i, p) for i in range(1, p.n + 1)])


def conjugates_from_cyclic(potential: NcPoly) -> List[NcPoly]:
    """Componentwise cyclic gradient of a potential"""
    return [cyclic_grad(i, potential) for i in range(1, potential.n + 1)]


def voiculescu_commutator(potential: NcPoly) -> NcPoly:
    """sum_i [D_i V, X_i], which vanishes identically"""
    total = NcPoly.zero(potential.n)
    for i in range(1, potential.n + 1):
        xi = cyclic_grad(i, potential)
        generator = NcPoly.generator(i, potential.n)
        total = total + xi * generator - generator * xi
    return total


def leibniz_defect(i: int, p: NcPoly, q: NcPoly) -> TensorPoly2:
    """d_i(pq) - d_i(p)(1 (x) q) - (p (x) 1) d_i(q)"""
    one = NcPoly.one(p.n)
    return fdq(i, p * q) - bimodule_act(one, fdq(i, p), q) - bimodule_act(p, fdq(i, q), one)


def realness_defect(i: int, p: NcPoly) -> TensorPoly2:
    """d_i(p*) - d_i(p)^dagger"""
    return fdq(i, star(p)) - fdq(i, p).dagger()


def coassociativity_defect(i: int, j: int, p: NcPoly) -> TensorPoly3:
    """(d_j (x) id) d_i p - (id (x) d_i) d_j p"""
    return second_fdq_left(j, i, p) - second_fdq_right(i, j, p)


def schwarz_defect(i: int, j: int, potential: NcPoly) -> TensorPoly2:
    """d_j(D_i V) - sigma(d_i(D_j V))"""
    return fdq(j, cyclic_grad(i, potential)) - fdq(i, cyclic_grad(j, potential)).flip()


@attr.s(slots=True)
class SuiteResult:
    """Checked and failed counts per identity"""

    checked: Dict[str, int] = attr.ib(factory=dict)
    failed: Dict[str, int] = attr.ib(factory=dict)

    def record(self, name: str, passed: bool) -> None:
        self.checked[name] = self.checked.get(name, 0) + 1
        if not passed:
            self.failed[name] = self.failed.get(name, 0) + 1
            LOGGER.error(f"Identity {name} failed")

    @property
    def passed(self) -> bool:
        return not any(self.failed.values())

    def to_dict(self) -> Dict[str, Dict[str, int]]:
        return {
            name: {"checked": count, "failed": self.failed.get(name, 0)}
            for name, count in sorted(self.checked.items())
        }


def identity_suite(
    rng: np.random.Generator,
    n: int,
    count: int = 200,
    max_degree: int = 5,
    potential_count: int = 100,
    potential_degree: int = 6,
) -> SuiteResult:
    """Leibniz, realness, coassociativity and commutator identities on random input"""
    result = SuiteResult()
    for _ in range(count):
        p = random_poly(rng, n, max_degree)
        q = random_poly(rng, n, max_degree)
        for i in range(1, n + 1):
            result.record("leibniz", not leibniz_defect(i, p, q))
            result.record("realness", not realness_defect(i, p))
            for j in range(1, n + 1):
                result.record("coassociativity", not coassociativity_defect(i, j, p))

    for _ in range(potential_count):
        potential = random_self_adjoint(rng, n, potential_degree)
        result.record("commutator", not voiculescu_commutator(potential))

    LOGGER.info(f"Identity suite over n={n}: {result.to_dict()}")
    return result
