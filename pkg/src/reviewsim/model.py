"""Domain types for the peer-review market model.

Everything here is immutable; numerical arrays are copied and frozen on
construction so instances can be shared freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from scipy import stats

ROW_TOL = 1e-12


class ModelError(ValueError):
    """Invalid model parameters (bad simplex, bad scale, ...)."""


class DegenerateEvidenceError(ValueError):
    """Observed evidence has zero likelihood under every quality."""


class DivergenceError(ArithmeticError):
    """A requested quantity is infinite or undefined (e.g. Cauchy mean)."""


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ModelError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_simplex(vec: np.ndarray, what: str, tol: float = ROW_TOL) -> None:
    if np.any(vec < 0) or not np.all(np.isfinite(vec)):
        raise ModelError(f"{what} has negative or non-finite entries")
    if abs(vec.sum() - 1.0) > tol:
        raise ModelError(f"{what} sums to {vec.sum():.15g}, not 1")


def check_row_stochastic(mat: np.ndarray, what: str = "matrix", tol: float = ROW_TOL) -> None:
    for i, row in enumerate(np.atleast_2d(mat)):
        _check_simplex(row, f"{what} row {i}", tol)


# ---------------------------------------------------------------------------
# Quality priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CategoricalPrior:
    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, 1)
        probs = _frozen(self.probs, 1)
        if values.shape != probs.shape:
            raise ModelError("prior values and probs differ in length")
        if values.size == 0:
            raise ModelError("prior needs at least one quality")
        if np.any(np.diff(values) <= 0):
            raise ModelError("prior values must be strictly increasing")
        _check_simplex(probs, "prior probs")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def support(self) -> tuple[float, float]:
        return float(self.values[0]), float(self.values[-1])

    def mean(self) -> float:
        return float(self.probs @ self.values)

    def require_mixed_signs(self) -> None:
        lo, hi = self.support
        if not (lo < 0 < hi):
            raise ModelError("prior support must contain negative and positive qualities")


_FAMILIES = {"gaussian": stats.norm, "laplace": stats.laplace, "cauchy": stats.cauchy}


@dataclass(frozen=True)
class ContinuousPrior:
    """Location-scale prior: ``gaussian`` (loc=mu, scale=sigma), ``laplace``
    (loc, b) or ``cauchy`` (x0, gamma)."""

    family: str
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ModelError(f"unknown prior family {self.family!r}; expected one of {sorted(_FAMILIES)}")
        if not self.scale > 0:
            raise ModelError("prior scale must be strictly positive")

    @property
    def dist(self):
        return _FAMILIES[self.family](loc=self.loc, scale=self.scale)

    @property
    def support(self) -> tuple[float, float]:
        return -np.inf, np.inf

    @property
    def has_mean(self) -> bool:
        return self.family != "cauchy"

    def mean(self) -> float:
        if not self.has_mean:
            raise DivergenceError("the Cauchy prior has no mean")
        return float(self.loc)

    def pdf(self, q):
        return self.dist.pdf(q)

    def sf(self, q):
        return self.dist.sf(q)


QualityPrior = Union[CategoricalPrior, ContinuousPrior]


# ---------------------------------------------------------------------------
# Review models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CategoricalReviews:
    """Row ``i`` of ``confusion`` is the score distribution for quality ``q_i``."""

    scores: np.ndarray
    confusion: np.ndarray

    def __post_init__(self):
        scores = _frozen(self.scores, 1)
        conf = _frozen(self.confusion, 2)
        if conf.shape[1] != scores.size:
            raise ModelError(f"confusion has {conf.shape[1]} columns for {scores.size} scores")
        if np.any(np.diff(scores) <= 0):
            raise ModelError("review scores must be strictly increasing")
        check_row_stochastic(conf, "confusion")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "confusion", conf)

    @property
    def n_scores(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class BinaryReviews:
    """Each review is correct with probability ``beta``; scores are {0, 1}."""

    beta: float

    def __post_init__(self):
        if not 0.5 < self.beta <= 1.0:
            raise ModelError("binary beta must lie in (1/2, 1]")

    def as_categorical(self) -> CategoricalReviews:
        b = self.beta
        return CategoricalReviews(scores=[0.0, 1.0], confusion=[[b, 1 - b], [1 - b, b]])


@dataclass(frozen=True)
class GaussianNoiseReviews:
    """Continuous reviews ``q + X`` with ``X ~ N(0, sigma^2)``.

    Thresholds in this model are compared against the mean review score,
    which for a single review is the raw score itself.
    """

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelError("noise sigma must be strictly positive")

    @property
    def noise(self):
        return stats.norm(loc=0.0, scale=self.sigma)

    def mean_noise(self, m: int):
        return stats.norm(loc=0.0, scale=self.sigma / np.sqrt(m))


ReviewModel = Union[CategoricalReviews, BinaryReviews, GaussianNoiseReviews]


def binary_prior() -> CategoricalPrior:
    return CategoricalPrior(values=[-1.0, 1.0], probs=[0.5, 0.5])


def as_categorical(review: ReviewModel) -> CategoricalReviews:
    if isinstance(review, CategoricalReviews):
        return review
    if isinstance(review, BinaryReviews):
        return review.as_categorical()
    raise TypeError(f"{type(review).__name__} has no categorical form")


def is_continuous(review: ReviewModel) -> bool:
    return isinstance(review, GaussianNoiseReviews)


# ---------------------------------------------------------------------------
# Authors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuthorModel:
    """Author preferences plus signal model.

    ``signal`` is ``None`` for noiseless authors, otherwise an
    L x |Sigma_A| row-stochastic matrix (a :class:`BinaryReviews` is
    accepted and expanded).
    """

    V: float
    eta: float
    signal: np.ndarray | None = None

    def __post_init__(self):
        if not self.V > 1:
            raise ModelError("conference value V must exceed 1")
        if not 0 < self.eta < 1:
            raise ModelError("discount eta must lie in (0, 1)")
        if self.signal is not None:
            sig = self.signal
            if isinstance(sig, BinaryReviews):
                sig = sig.as_categorical().confusion
            sig = _frozen(sig, 2)
            check_row_stochastic(sig, "author signal")
            object.__setattr__(self, "signal", sig)

    @property
    def noiseless(self) -> bool:
        return self.signal is None

    @property
    def rho(self) -> float:
        return (self.V - self.eta) / (1 - self.eta)

    @property
    def inv_rho(self) -> float:
        return (1 - self.eta) / (self.V - self.eta)

    @classmethod
    def from_rho(cls, rho: float, eta: float = 0.7, signal=None) -> "AuthorModel":
        return cls(V=rho * (1 - eta) + eta, eta=eta, signal=signal)


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Threshold:
    """Accept when the posterior expected quality clears ``tau``.

    With ``r=None`` the categorical knife-edge convention is used (a single
    ``tau`` interpolates between adjacent outcome classes); an explicit
    ``r`` is the acceptance probability exactly at ``U == tau``.
    """

    tau: float
    r: float | None = None

    def __post_init__(self):
        if self.r is not None and not 0 <= self.r <= 1:
            raise ModelError("r must lie in [0, 1]")
        if np.isnan(self.tau):
            raise ModelError("tau is NaN")


@dataclass(frozen=True)
class GeneralMemoryless:
    """Arbitrary map from a review vector (tuple of scores) to [0, 1]."""

    accept_prob: Callable[[tuple], float] | Mapping[tuple, float]

    def __call__(self, reviews: tuple) -> float:
        f = self.accept_prob
        p = f[tuple(reviews)] if isinstance(f, Mapping) else f(tuple(reviews))
        if not 0 <= p <= 1:
            raise ModelError(f"acceptance probability {p} for {reviews} outside [0, 1]")
        return float(p)


@dataclass(frozen=True)
class TimeLimitedFixed:
    tau: float
    T: int
    r: float | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ModelError("T must be at least 1")

    @property
    def round_policy(self) -> Threshold:
        return Threshold(self.tau, self.r)


@dataclass(frozen=True)
class RoundDependent:
    """Round ``t`` accepts iff the posterior from round-``t`` reviews is at least ``taus[t-1]``."""

    taus: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        if len(self.taus) < 1:
            raise ModelError("threshold vector must have length T >= 1")

    @property
    def T(self) -> int:
        return len(self.taus)


@dataclass(frozen=True)
class ReviewFollowing:
    """Round ``t`` accepts iff the posterior from *all* reviews so far is at least ``taus[t-1]``.

    ``fixed_rounds`` marks rounds decided instead by a per-round rule
    (``majority`` of the fresh reviews); ``tail_rule`` selects whether that
    rule reads only the fresh reviews (``per_round``) or is translated into
    an equivalent cumulative-posterior cutoff (``cumulative``).
    """

    taus: tuple[float, ...]
    fixed_rounds: frozenset[int] = field(default_factory=frozenset)
    tail_rule: str = "per_round"

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "fixed_rounds", frozenset(self.fixed_rounds))
        if len(self.taus) < 1:
            raise ModelError("threshold vector must have length T >= 1")
        if self.tail_rule not in ("per_round", "cumulative"):
            raise ModelError("tail_rule must be 'per_round' or 'cumulative'")

    @property
    def T(self) -> int:
        return len(self.taus)


MemorylessPolicy = Union[Threshold, GeneralMemoryless]
Policy = Union[Threshold, GeneralMemoryless, TimeLimitedFixed, RoundDependent, ReviewFollowing]


def mix_rows_uniform(matrix: np.ndarray, lam: float) -> np.ndarray:
    """Each row becomes ``lam * row + (1 - lam) * uniform``."""
    if not 0 <= lam <= 1:
        raise ModelError("mixing weight must lie in [0, 1]")
    mat = np.asarray(matrix, dtype=float)
    check_row_stochastic(mat, "input", tol=1e-9)
    return lam * mat + (1 - lam) / mat.shape[1]


@dataclass(frozen=True)
class Setting:
    """Bundle of prior, review model, author and reviews per round."""

    prior: QualityPrior
    review: ReviewModel
    author: AuthorModel
    m: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ModelError("m must be at least 1")
        if isinstance(self.review, (CategoricalReviews, BinaryReviews)):
            if not isinstance(self.prior, CategoricalPrior):
                raise ModelError("categorical reviews need a categorical prior")
            rows = as_categorical(self.review).confusion.shape[0]
            if rows != self.prior.size:
                raise ModelError(f"confusion has {rows} rows for {self.prior.size} qualities")
        if self.author.signal is not None and self.author.signal.shape[0] != getattr(self.prior, "size", -1):
            raise ModelError("author signal rows must match the number of qualities")

    @property
    def continuous(self) -> bool:
        return is_continuous(self.review)

    def with_(self, **changes) -> "Setting":
        from dataclasses import replace

        return replace(self, **changes)


def validate_scores(review: CategoricalReviews, s: Sequence[float]) -> np.ndarray:
    """Map score values to column indices, rejecting unknown scores."""
    idx = np.searchsorted(review.scores, s)
    idx = np.clip(idx, 0, review.n_scores - 1)
    if not np.allclose(review.scores[idx], s):
        raise ModelError(f"review vector {list(s)} contains scores outside {review.scores.tolist()}")
    return idx
