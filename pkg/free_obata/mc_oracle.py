"""
Monte Carlo cross-check of exact traces with random matrices.

Independent GUE matrices are asymptotically free semicircular elements.  Each
sample S is built as

    A = (G1 + i G2) / sqrt(2),   S = (A + A^*) / sqrt(2) / sqrt(N)

with G1, G2 independent standard real Gaussian N x N matrices, so the
off-diagonal entries of S are complex with E|S_ij|^2 = 1/N and the diagonal is
real with variance 1/N.  A family with covariance C is X = C^(1/2) S using the
symmetric square root.

Every trial draws from its own stream spawned from the seed with
numpy.random.SeedSequence.spawn, so results do not depend on how trials are
scheduled across workers.
"""
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
import logging
import re
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import attr
import numpy as np

from .ncpoly import NcPoly, Word, format_poly, parse_poly
from .state import CovarianceModel, trace

LOGGER = logging.getLogger(__name__)

MAX_DEGREE = 10

BIAS_CONSTANT = 1.0

DEFAULT_CORPUS = [
    "X1^2",
    "X1^4",
    "X1^6",
    "X1^8",
    "X1^3",
    "X2^2",
    "X2^4",
    "X1*X2",
    "X1*X2*X1*X2",
    "X1^2*X2^2",
    "X1*X2^2*X1",
    "X1^2*X2*X1^2*X2",
    "X1*X2*X2*X1*X1*X2*X2*X1",
    "X1^2*X2^2*X1^2*X2^2",
    "X1^4*X2^4",
    "X1*X2*X1*X2*X1*X2*X1*X2",
    "(X1+X2)^4",
    "(X1-X2)^2*(X1+X2)^2",
    "X1^3*X2^3",
    "1",
]


class DegreeCapExceeded(ValueError):
    """Raised when a polynomial is too long to evaluate on sampled matrices"""


@attr.s(slots=True, kw_only=True, frozen=True)
class McConfig:
    """Matrix size N, trial count T, seed and the model to sample"""

    matrix_size: int = attr.ib(default=300)
    trials: int = attr.ib(default=50)
    seed: int = attr.ib(default=0)
    model: CovarianceModel = attr.ib()
    workers: int = attr.ib(default=1)

    # self is required for the attr validation to work
    # pylint: disable=no-self-use
    @matrix_size.validator
    def validate_matrix_size(self, _: attr.Attribute, matrix_size: int) -> None:
        if matrix_size < 2:
            raise ValueError(f"Matrix size must be at least 2, got {matrix_size}")

    @trials.validator
    def validate_trials(self, _: attr.Attribute, trials: int) -> None:
        if trials < 1:
            raise ValueError(f"Trial count must be at least 1, got {trials}")

    @seed.validator
    def validate_seed(self, _: attr.Attribute, seed: int) -> None:
        if seed < 0:
            raise ValueError(f"Seed must be non-negative, got {seed}")

    @workers.validator
    def validate_workers(self, _: attr.Attribute, workers: int) -> None:
        if workers < 1:
            raise ValueError(f"Worker count must be at least 1, got {workers}")

    def trial_streams(self) -> List[np.random.SeedSequence]:
        """One child sequence per trial, independent of scheduling"""
        return np.random.SeedSequence(self.seed).spawn(self.trials)


def symmetric_sqrt(covariance: CovarianceModel) -> np.ndarray:
    values, vectors = np.linalg.eigh(
        np.array([[float(entry) for entry in row] for row in covariance.covariance])
    )
    return vectors @ np.diag(np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def gue(rng: np.random.Generator, size: int) -> np.ndarray:
    """Normalized GUE sample with E|S_ij|^2 = 1/N"""
    a = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / np.sqrt(2)
    return (a + a.conj().T) / np.sqrt(2) / np.sqrt(size)


def sample_family(cfg: McConfig, rng: Optional[np.random.Generator] = None) -> List[np.ndarray]:
    """n Hermitian matrices X_i = sum_j (C^(1/2))_ij S_j"""
    rng = rng or np.random.default_rng(cfg.trial_streams()[0])
    n = cfg.model.n
    samples = [gue(rng, cfg.matrix_size) for _ in range(n)]
    root = symmetric_sqrt(cfg.model)
    return [sum(root[i, j] * samples[j] for j in range(n)) for i in range(n)]


class _WordEvaluator:
    """Normalized traces of words on one sampled family, sharing prefix products"""

    def __init__(self, matrices: Sequence[np.ndarray]) -> None:
        self.matrices = matrices
        self.size = matrices[0].shape[0]
        self.products: Dict[Word, np.ndarray] = {}

    def product(self, word: Word) -> np.ndarray:
        if word not in self.products:
            if len(word) == 1:
                self.products[word] = self.matrices[word[0] - 1]
            else:
                self.products[word] = self.product(word[:-1]) @ self.matrices[word[-1] - 1]
        return self.products[word]

    def trace(self, word: Word) -> float:
        if not word:
            return 1.0
        if len(word) == 1:
            return float(np.trace(self.matrices[word[0] - 1]).real) / self.size
        half = (len(word) + 1) // 2
        left = self.product(word[:half])
        right = self.product(word[half:])
        return float(np.sum(left * right.T).real) / self.size


def _check_degree(p: NcPoly) -> None:
    if p.degree() > MAX_DEGREE:
        raise DegreeCapExceeded(f"Degree {p.degree()} exceeds the cap {MAX_DEGREE}")


def _trial(polys: Sequence[NcPoly], cfg: McConfig, stream: np.random.SeedSequence) -> np.ndarray:
    evaluator = _WordEvaluator(sample_family(cfg, np.random.default_rng(stream)))
    return np.array(
        [
            sum(float(coef) * evaluator.trace(word) for word, coef in p.terms.items())
            for p in polys
        ]
    )


def _sample_traces(polys: Sequence[NcPoly], cfg: McConfig) -> np.ndarray:
    """Array of shape (trials, len(polys)); rows are in trial order"""
    for p in polys:
        _check_degree(p)
        if p.n != cfg.model.n:
            raise ValueError(f"Polynomial over {p.n} generators, model over {cfg.model.n}")
    streams = cfg.trial_streams()
    if cfg.workers == 1:
        rows = [_trial(polys, cfg, stream) for stream in streams]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(lambda stream: _trial(polys, cfg, stream), streams))
    return np.array(rows)


@attr.s(frozen=True, slots=True)
class McEstimate:
    mean: float = attr.ib()
    stderr: float = attr.ib()
    trials: int = attr.ib()


def _estimate(column: np.ndarray) -> McEstimate:
    trials = len(column)
    stderr = float(np.std(column, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return McEstimate(float(np.mean(column)), stderr, trials)


def mc_trace(p: NcPoly, cfg: McConfig) -> McEstimate:
    """Mean normalized trace of p over the trials, with its standard error"""
    return _estimate(_sample_traces([p], cfg)[:, 0])


def corpus_for(n: int, corpus: Sequence[str] = DEFAULT_CORPUS) -> List[str]:
    """Corpus entries that only use generators X1..Xn"""
    return [text for text in corpus if all(int(i) <= n for i in re.findall(r"X(\d+)", text))]


@attr.s(frozen=True, slots=True)
class CrosscheckRow:
    word: str = attr.ib()
    exact: Fraction = attr.ib()
    estimate: float = attr.ib()
    stderr: float = attr.ib()
    bound: float = attr.ib()

    @property
    def passed(self) -> bool:
        return abs(self.estimate - float(self.exact)) <= self.bound

    def to_dict(self) -> Dict[str, Any]:
        return {
            "word": self.word,
            "exact": float(self.exact),
            "estimate": self.estimate,
            "stderr": self.stderr,
            "bound": self.bound,
            "passed": self.passed,
        }


@attr.s(frozen=True, slots=True)
class CrosscheckResult:
    rows: Tuple[CrosscheckRow, ...] = attr.ib(converter=tuple)
    cfg: McConfig = attr.ib()
    allowed_failures: int = attr.ib(default=1)

    @property
    def failures(self) -> int:
        return sum(not row.passed for row in self.rows)

    @property
    def passed(self) -> bool:
        return self.failures <= self.allowed_failures

    def to_dict(self) -> Dict[str, Any]:
        return {
            "N": self.cfg.matrix_size,
            "T": self.cfg.trials,
            "seed": self.cfg.seed,
            "failures": self.failures,
            "allowed_failures": self.allowed_failures,
            "passed": self.passed,
            "rows": [row.to_dict() for row in self.rows],
        }


def crosscheck(
    words: Sequence[Union[str, NcPoly]],
    cfg: McConfig,
    sigmas: float = 4.0,
    allowed_failures: int = 1,
) -> CrosscheckResult:
    """|estimate - exact| <= sigmas (stderr + c0 / N) for every corpus entry"""
    n = cfg.model.n
    polys = [parse_poly(word, n) if isinstance(word, str) else word for word in words]
    samples = _sample_traces(polys, cfg)
    rows = []
    for k, p in enumerate(polys):
        estimate = _estimate(samples[:, k])
        bound = sigmas * (estimate.stderr + BIAS_CONSTANT / cfg.matrix_size)
        rows.append(
            CrosscheckRow(
                format_poly(p), trace(p, cfg.model), estimate.mean, estimate.stderr, bound
            )
        )
    result = CrosscheckResult(rows, cfg, allowed_failures)
    for row in result.rows:
        if not row.passed:
            LOGGER.warning(
                f"Monte Carlo mismatch for {row.word}: {row.estimate:.6f} vs {float(row.exact):.6f}"
            )
    LOGGER.info(
        f"Monte Carlo cross-check N={cfg.matrix_size} T={cfg.trials}: "
        f"{result.failures} of {len(result.rows)} outside the bound"
    )
    return result
