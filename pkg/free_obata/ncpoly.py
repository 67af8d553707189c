"""
Exact non-commutative polynomials in n self-adjoint generators X1, ..., Xn.

A polynomial is a finite linear combination of words with rational
coefficients.  Words are tuples of generator indices in 1..n and the empty
word is the unit.  The same representation is used for the tensor square and
the tensor cube of the algebra, where the keys are pairs and triples of words.

All values are immutable and kept in canonical form: no stored zero
coefficients and terms sorted by degree, then lexicographically, so that
iteration and printing are deterministic.

The text syntax understood by parse_poly / parse_tensor is:

    generators   X1 .. Xn
    products     X1*X2 or X1X2 (juxtaposition)
    sums         +, -
    scalars      rational literals 3, 2/5
    powers       X1^3, (X1+X2)^2
    tensors      a (x) b  and  a (x) b (x) c, one simple tensor per term

Legs of a simple tensor are products; sums inside a leg need parentheses.
"""
from fractions import Fraction
import re
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import attr
import numpy as np

Word = Tuple[int, ...]
Scalar = Union[int, Fraction]

EMPTY_WORD: Word = ()


class GeneratorMismatch(ValueError):
    """Raised when two operands live over different generator counts"""


class IndexOutOfRange(ValueError):
    """Raised when a generator index is not in 1..n"""


def word_key(word: Word) -> Tuple[int, Word]:
    """Sort key for words: degree first, then lexicographic"""
    return (len(word), word)


def tensor_key(words: Tuple[Word, ...]) -> Tuple:
    """Sort key for word tuples: total degree first, then legwise"""
    return (sum(len(word) for word in words), tuple(word_key(word) for word in words))


def _as_fraction(value: Scalar) -> Fraction:
    if isinstance(value, Fraction):
        return value
    return Fraction(value)


def _canonical_words(terms: Mapping[Word, Scalar]) -> Dict[Word, Fraction]:
    items = ((tuple(word), _as_fraction(coef)) for word, coef in dict(terms).items())
    return {word: coef for word, coef in sorted(items, key=lambda t: word_key(t[0])) if coef}


def _canonical_tensors(
    terms: Mapping[Tuple[Word, ...], Scalar]
) -> Dict[Tuple[Word, ...], Fraction]:
    items = (
        (tuple(tuple(word) for word in key), _as_fraction(coef))
        for key, coef in dict(terms).items()
    )
    return {key: coef for key, coef in sorted(items, key=lambda t: tensor_key(t[0])) if coef}


def check_index(i: int, n: int) -> None:
    """Raise IndexOutOfRange unless 1 <= i <= n"""
    if not 1 <= i <= n:
        raise IndexOutOfRange(f"Generator index {i} not in range 1..{n}")


def _accumulate(target: Dict, key, coef: Fraction) -> None:
    target[key] = target.get(key, 0) + coef


@attr.s(frozen=True, slots=True, eq=False, repr=False)
class NcPoly:
    """An element of the free algebra C<X1, ..., Xn> with rational coefficients"""

    n: int = attr.ib()
    terms: Mapping[Word, Fraction] = attr.ib(factory=dict, converter=_canonical_words)

    @n.validator
    def _validate_n(self, _: attr.Attribute, n: int) -> None:
        if not isinstance(n, int) or n < 1:
            raise ValueError(f"Generator count must be a positive integer, got {n!r}")

    @terms.validator
    def _validate_terms(self, _: attr.Attribute, terms: Mapping[Word, Fraction]) -> None:
        for word in terms:
            for letter in word:
                check_index(letter, self.n)

    @classmethod
    def zero(cls, n: int) -> "NcPoly":
        return cls(n, {})

    @classmethod
    def one(cls, n: int) -> "NcPoly":
        return cls(n, {EMPTY_WORD: 1})

    @classmethod
    def constant(cls, value: Scalar, n: int) -> "NcPoly":
        return cls(n, {EMPTY_WORD: value})

    @classmethod
    def generator(cls, i: int, n: int) -> "NcPoly":
        check_index(i, n)
        return cls(n, {(i,): 1})

    @classmethod
    def from_word(cls, word: Sequence[int], n: int, coef: Scalar = 1) -> "NcPoly":
        return cls(n, {tuple(word): coef})

    def __iter__(self) -> Iterator[Tuple[Word, Fraction]]:
        return iter(self.terms.items())

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = NcPoly.constant(other, self.n)
        if not isinstance(other, NcPoly):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __ne__(self, other) -> bool:
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __hash__(self) -> int:
        return hash((self.n, tuple(self.terms.items())))

    def __repr__(self) -> str:
        return f"NcPoly(n={self.n}, {format_poly(self)!r})"

    def __str__(self) -> str:
        return format_poly(self)

    def _coerce(self, other) -> "NcPoly":
        if isinstance(other, NcPoly):
            if other.n != self.n:
                raise GeneratorMismatch(f"Generator counts differ: {self.n} != {other.n}")
            return other
        if isinstance(other, (int, Fraction)):
            return NcPoly.constant(other, self.n)
        return NotImplemented

    def __add__(self, other) -> "NcPoly":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = dict(self.terms)
        for word, coef in other.terms.items():
            _accumulate(terms, word, coef)
        return NcPoly(self.n, terms)

    __radd__ = __add__

    def __neg__(self) -> "NcPoly":
        return NcPoly(self.n, {word: -coef for word, coef in self.terms.items()})

    def __sub__(self, other) -> "NcPoly":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "NcPoly":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other - self

    def __mul__(self, other) -> "NcPoly":
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return mul(self, other)

    def __rmul__(self, other) -> "NcPoly":
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    def __truediv__(self, other) -> "NcPoly":
        if isinstance(other, (int, Fraction)):
            return self.scale(1 / _as_fraction(other))
        return NotImplemented

    def __pow__(self, exponent: int) -> "NcPoly":
        if not isinstance(exponent, int) or exponent < 0:
            raise ValueError(f"Only non-negative integer powers are defined, got {exponent!r}")
        result = NcPoly.one(self.n)
        for _ in range(exponent):
            result = mul(result, self)
        return result

    def scale(self, factor: Scalar) -> "NcPoly":
        factor = _as_fraction(factor)
        return NcPoly(self.n, {word: factor * coef for word, coef in self.terms.items()})

    def star(self) -> "NcPoly":
        return star(self)

    def degree(self) -> int:
        """Largest word length, -1 for the zero polynomial"""
        return max((len(word) for word in self.terms), default=-1)

    def coefficient(self, word: Sequence[int]) -> Fraction:
        return self.terms.get(tuple(word), Fraction(0))

    def is_constant(self) -> bool:
        return self.degree() <= 0

    def is_self_adjoint(self) -> bool:
        return self == star(self)


def mul(p: NcPoly, q: NcPoly) -> NcPoly:
    """Concatenation product extended bilinearly"""
    if p.n != q.n:
        raise GeneratorMismatch(f"Generator counts differ: {p.n} != {q.n}")
    terms: Dict[Word, Fraction] = {}
    for left, left_coef in p.terms.items():
        for right, right_coef in q.terms.items():
            _accumulate(terms, left + right, left_coef * right_coef)
    return NcPoly(p.n, terms)


def star(p: NcPoly) -> NcPoly:
    """Adjoint: reverses every word, coefficients are real"""
    return NcPoly(p.n, {word[::-1]: coef for word, coef in p.terms.items()})


@attr.s(frozen=True, slots=True, eq=False, repr=False)
class _TensorPoly:
    """Common linear structure of the tensor square and tensor cube"""

    RANK = 0

    n: int = attr.ib()
    terms: Mapping[Tuple[Word, ...], Fraction] = attr.ib(
        factory=dict, converter=_canonical_tensors
    )

    @terms.validator
    def _validate_terms(self, _: attr.Attribute, terms) -> None:
        for key in terms:
            if len(key) != self.RANK:
                raise ValueError(f"Tensor key {key} does not have rank {self.RANK}")
            for word in key:
                for letter in word:
                    check_index(letter, self.n)

    @classmethod
    def zero(cls, n: int):
        return cls(n, {})

    @classmethod
    def simple(cls, *legs: NcPoly):
        """The simple tensor legs[0] (x) legs[1] (x) ..."""
        if len(legs) != cls.RANK:
            raise ValueError(f"Expected {cls.RANK} legs, got {len(legs)}")
        n = legs[0].n
        terms: Dict[Tuple[Word, ...], Fraction] = {(): Fraction(1)}
        for leg in legs:
            if leg.n != n:
                raise GeneratorMismatch(f"Generator counts differ: {leg.n} != {n}")
            expanded: Dict[Tuple[Word, ...], Fraction] = {}
            for key, coef in terms.items():
                for word, leg_coef in leg.terms.items():
                    _accumulate(expanded, key + (word,), coef * leg_coef)
            terms = expanded
        return cls(n, terms)

    def __iter__(self):
        return iter(self.terms.items())

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __ne__(self, other) -> bool:
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __hash__(self) -> int:
        return hash((self.RANK, self.n, tuple(self.terms.items())))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, {format_tensor(self)!r})"

    def __str__(self) -> str:
        return format_tensor(self)

    def _check(self, other) -> None:
        if type(other) is not type(self):
            raise TypeError(f"Cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.n != self.n:
            raise GeneratorMismatch(f"Generator counts differ: {self.n} != {other.n}")

    def __add__(self, other):
        self._check(other)
        terms = dict(self.terms)
        for key, coef in other.terms.items():
            _accumulate(terms, key, coef)
        return type(self)(self.n, terms)

    def __neg__(self):
        return type(self)(self.n, {key: -coef for key, coef in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    __rmul__ = __mul__

    def scale(self, factor: Scalar):
        factor = _as_fraction(factor)
        return type(self)(self.n, {key: factor * coef for key, coef in self.terms.items()})

    def degree(self) -> int:
        return max((sum(len(word) for word in key) for key in self.terms), default=-1)


@attr.s(frozen=True, slots=True, eq=False, repr=False)
class TensorPoly2(_TensorPoly):
    """An element of the tensor square, the codomain of the free difference quotients"""

    RANK = 2

    @classmethod
    def unit(cls, n: int) -> "TensorPoly2":
        return cls(n, {(EMPTY_WORD, EMPTY_WORD): 1})

    def dagger(self) -> "TensorPoly2":
        """(a (x) b)^dagger = b* (x) a*"""
        return TensorPoly2(self.n, {(v[::-1], u[::-1]): c for (u, v), c in self.terms.items()})

    def flip(self) -> "TensorPoly2":
        """sigma(a (x) b) = b (x) a"""
        return TensorPoly2(self.n, {(v, u): c for (u, v), c in self.terms.items()})

    def star(self) -> "TensorPoly2":
        """Involution of M (x) M^op: (a (x) b)* = a* (x) b*"""
        return TensorPoly2(self.n, {(u[::-1], v[::-1]): c for (u, v), c in self.terms.items()})


@attr.s(frozen=True, slots=True, eq=False, repr=False)
class TensorPoly3(_TensorPoly):
    """An element of the tensor cube, the codomain of second order quotients"""

    RANK = 3


def bimodule_act(a: NcPoly, tensor: TensorPoly2, b: NcPoly) -> TensorPoly2:
    """a (x (x) y) b = ax (x) yb"""
    if not a.n == tensor.n == b.n:
        raise GeneratorMismatch("Generator counts differ in bimodule action")
    terms: Dict[Tuple[Word, ...], Fraction] = {}
    for left, left_coef in a.terms.items():
        for (u, v), coef in tensor.terms.items():
            for right, right_coef in b.terms.items():
                _accumulate(terms, (left + u, v + right), left_coef * coef * right_coef)
    return TensorPoly2(a.n, terms)


def sharp2(first: TensorPoly2, second: TensorPoly2) -> TensorPoly2:
    """(a (x) b) # (x (x) y) = ax (x) yb, the product of M (x) M^op"""
    if first.n != second.n:
        raise GeneratorMismatch(f"Generator counts differ: {first.n} != {second.n}")
    terms: Dict[Tuple[Word, ...], Fraction] = {}
    for (a, b), first_coef in first.terms.items():
        for (x, y), second_coef in second.terms.items():
            _accumulate(terms, (a + x, y + b), first_coef * second_coef)
    return TensorPoly2(first.n, terms)


def sharp23(first: TensorPoly2, cube: TensorPoly3) -> TensorPoly3:
    """(a (x) b) # (d (x) e (x) f) = ad (x) e (x) bf"""
    if first.n != cube.n:
        raise GeneratorMismatch(f"Generator counts differ: {first.n} != {cube.n}")
    terms: Dict[Tuple[Word, ...], Fraction] = {}
    for (a, b), first_coef in first.terms.items():
        for (d, e, f), cube_coef in cube.terms.items():
            _accumulate(terms, (a + d, e, b + f), first_coef * cube_coef)
    return TensorPoly3(first.n, terms)


# --- random inputs for identity suites ---------------------------------------


def random_word(rng: np.random.Generator, n: int, max_degree: int) -> Word:
    length = int(rng.integers(0, max_degree + 1))
    return tuple(int(letter) for letter in rng.integers(1, n + 1, size=length))


def random_coefficient(rng: np.random.Generator, max_denominator: int = 4) -> Fraction:
    numerator = int(rng.integers(-5, 6)) or 1
    return Fraction(numerator, int(rng.integers(1, max_denominator + 1)))


def random_poly(
    rng: np.random.Generator, n: int, max_degree: int, max_terms: int = 5
) -> NcPoly:
    """A random polynomial with small rational coefficients"""
    count = int(rng.integers(1, max_terms + 1))
    terms: Dict[Word, Fraction] = {}
    for _ in range(count):
        _accumulate(terms, random_word(rng, n, max_degree), random_coefficient(rng))
    return NcPoly(n, terms)


def random_self_adjoint(
    rng: np.random.Generator, n: int, max_degree: int, max_terms: int = 5
) -> NcPoly:
    poly = random_poly(rng, n, max_degree, max_terms)
    return (poly + star(poly)) / 2


def random_tensor(
    rng: np.random.Generator, n: int, max_degree: int, max_terms: int = 4
) -> TensorPoly2:
    count = int(rng.integers(1, max_terms + 1))
    terms: Dict[Tuple[Word, ...], Fraction] = {}
    for _ in range(count):
        key = (random_word(rng, n, max_degree), random_word(rng, n, max_degree))
        _accumulate(terms, key, random_coefficient(rng))
    return TensorPoly2(n, terms)


# --- text syntax -------------------------------------------------------------


@attr.s(auto_exc=True)
class ParseError(ValueError):
    """A malformed polynomial string, with the position of the offending character"""

    message: str = attr.ib()
    text: str = attr.ib(default="")
    position: int = attr.ib(default=0)

    def __str__(self) -> str:
        return f"{self.message}\n  {self.text}\n  {' ' * self.position}^"


TOKEN_RE = re.compile(
    r"\s*(?:(?P<tensor>\(x\))|(?P<gen>X(?P<index>\d+))|(?P<num>\d+(?:/\d+)?)"
    r"|(?P<op>[-+*^()]))"
)


@attr.s(slots=True)
class _Token:
    kind: str = attr.ib()
    value: str = attr.ib()
    position: int = attr.ib()


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    position = 0
    while position < len(text):
        if text[position:].strip() == "":
            break
        match = TOKEN_RE.match(text, position)
        if match is None or match.end() == position:
            start = position + len(text[position:]) - len(text[position:].lstrip())
            raise ParseError(f"Unexpected character {text[start]!r}", text, start)
        kind = match.lastgroup if match.lastgroup != "index" else "gen"
        start = match.start(kind)
        value = match.group("index") if kind == "gen" else match.group(kind)
        tokens.append(_Token(kind, value, start))
        position = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive descent over the token stream"""

    def __init__(self, text: str, n: int) -> None:
        self.text = text
        self.n = n
        self.tokens = _tokenize(text)
        self.index = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def error(self, message: str, token: Optional[_Token] = None) -> ParseError:
        token = token or self.current
        return ParseError(message, self.text, token.position)

    def accept(self, kind: str, value: Optional[str] = None) -> Optional[_Token]:
        token = self.current
        if token.kind == kind and (value is None or token.value == value):
            self.index += 1
            return token
        return None

    def expect_end(self) -> None:
        if self.current.kind != "end":
            raise self.error(f"Unexpected {self.current.value!r}")

    def leading_sign(self) -> int:
        if self.accept("op", "-"):
            return -1
        self.accept("op", "+")
        return 1

    def starts_factor(self) -> bool:
        token = self.current
        return token.kind in ("gen", "num") or (token.kind == "op" and token.value == "(")

    def sum(self) -> NcPoly:
        sign = self.leading_sign()
        result = self.product().scale(sign)
        while True:
            if self.accept("op", "+"):
                result = result + self.product()
            elif self.accept("op", "-"):
                result = result - self.product()
            else:
                return result

    def product(self) -> NcPoly:
        if not self.starts_factor():
            raise self.error("Expected a generator, a number or '('")
        result = self.power()
        while True:
            if self.accept("op", "*"):
                if not self.starts_factor():
                    raise self.error("Expected a factor after '*'")
                result = result * self.power()
            elif self.starts_factor():
                result = result * self.power()
            else:
                return result

    def power(self) -> NcPoly:
        base = self.atom()
        if self.accept("op", "^"):
            token = self.accept("num")
            if token is None or "/" in token.value:
                raise self.error("Expected a non-negative integer exponent")
            return base ** int(token.value)
        return base

    def atom(self) -> NcPoly:
        token = self.current
        if self.accept("gen"):
            index = int(token.value)
            if not 1 <= index <= self.n:
                raise self.error(f"Generator X{index} not in X1..X{self.n}", token)
            return NcPoly.generator(index, self.n)
        if self.accept("num"):
            try:
                return NcPoly.constant(Fraction(token.value), self.n)
            except ZeroDivisionError:
                raise self.error("Zero denominator", token) from None
        if self.accept("op", "("):
            inner = self.sum()
            if not self.accept("op", ")"):
                raise self.error("Expected ')'")
            return inner
        raise self.error("Expected a generator, a number or '('")

    def tensor_sum(self, rank: int) -> _TensorPoly:
        cls = TensorPoly2 if rank == 2 else TensorPoly3
        result = cls.zero(self.n)
        sign = self.leading_sign()
        while True:
            legs = [self.product()]
            for _ in range(rank - 1):
                if not self.accept("tensor"):
                    raise self.error("Expected '(x)'")
                legs.append(self.product())
            if self.current.kind == "tensor":
                raise self.error(f"Too many tensor legs for rank {rank}")
            result = result + cls.simple(*legs).scale(sign)
            if self.accept("op", "+"):
                sign = 1
            elif self.accept("op", "-"):
                sign = -1
            else:
                return result


def parse_poly(text: str, n: int) -> NcPoly:
    """Parse the polynomial text syntax; raises ParseError with a caret position"""
    parser = _Parser(text, n)
    if parser.current.kind == "end":
        raise parser.error("Empty polynomial")
    result = parser.sum()
    parser.expect_end()
    return result


def parse_tensor(text: str, n: int, rank: int = 2) -> _TensorPoly:
    """Parse 'a (x) b' (rank 2) or 'a (x) b (x) c' (rank 3) sums"""
    if rank not in (2, 3):
        raise ValueError(f"Tensor rank must be 2 or 3, got {rank}")
    parser = _Parser(text, n)
    if parser.current.kind == "end":
        raise parser.error("Empty tensor")
    result = parser.tensor_sum(rank)
    parser.expect_end()
    return result


def format_coefficient(coef: Fraction) -> str:
    return str(coef.numerator) if coef.denominator == 1 else f"{coef.numerator}/{coef.denominator}"


def format_word(word: Word) -> str:
    return "*".join(f"X{letter}" for letter in word) if word else "1"


def _format_monomial(coef: Fraction, body: str, is_unit: bool) -> str:
    magnitude = abs(coef)
    if is_unit:
        return format_coefficient(magnitude)
    if magnitude == 1:
        return body
    return f"{format_coefficient(magnitude)}*{body}"


def _join_terms(pieces: List[Tuple[Fraction, str]]) -> str:
    if not pieces:
        return "0"
    parts = []
    for position, (coef, text) in enumerate(pieces):
        if position == 0:
            parts.append(f"-{text}" if coef < 0 else text)
        else:
            parts.append(f" - {text}" if coef < 0 else f" + {text}")
    return "".join(parts)


def format_poly(poly: NcPoly) -> str:
    """Canonical text form; parse_poly(format_poly(p), p.n) == p"""
    pieces = [
        (coef, _format_monomial(coef, format_word(word), not word))
        for word, coef in poly.terms.items()
    ]
    return _join_terms(pieces)


def format_tensor(tensor: _TensorPoly) -> str:
    """Canonical text form; parse_tensor(format_tensor(t), t.n, t.RANK) == t"""
    pieces = []
    for key, coef in tensor.terms.items():
        body = " (x) ".join(format_word(word) for word in key)
        pieces.append((coef, _format_monomial(coef, body, False)))
    return _join_terms(pieces)
