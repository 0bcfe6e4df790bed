"""Posteriors over paper quality and per-round acceptance probabilities."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, stats

from .model import (
    BinaryReviews,
    CategoricalPrior,
    CategoricalReviews,
    ContinuousPrior,
    DegenerateEvidenceError,
    GaussianNoiseReviews,
    GeneralMemoryless,
    ModelError,
    QualityPrior,
    ReviewModel,
    Threshold,
    as_categorical,
    validate_scores,
)

MERGE_TOL = 1e-10
MAX_VECTORS = 2_000_000


def _log(a: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(a)


def posterior_weights(prior: CategoricalPrior, review: ReviewModel, s: Sequence[float]) -> np.ndarray:
    """Posterior distribution over the prior's support given review scores ``s``."""
    conf = as_categorical(review)
    idx = validate_scores(conf, list(s))
    loglik = _log(conf.confusion[:, idx]).sum(axis=1) + _log(prior.probs)
    if not np.any(np.isfinite(loglik)):
        raise DegenerateEvidenceError(f"reviews {list(s)} have zero likelihood under every quality")
    w = np.exp(loglik - loglik.max())
    return w / w.sum()


def _continuous_posterior_mean(prior: ContinuousPrior, review: GaussianNoiseReviews, s: Sequence[float]) -> float:
    s = np.asarray(s, dtype=float)
    m = s.size
    sbar = float(s.mean())
    sd = review.sigma / math.sqrt(m)
    if prior.family == "gaussian":
        prec = 1 / prior.scale**2 + m / review.sigma**2
        return float((prior.loc / prior.scale**2 + s.sum() / review.sigma**2) / prec)

    dist = prior.dist
    lo = min(sbar - 40 * sd, prior.loc - 40 * prior.scale)
    hi = max(sbar + 40 * sd, prior.loc + 40 * prior.scale)
    grid = np.linspace(lo, hi, 2001)
    shift = np.max(dist.logpdf(grid) + stats.norm.logpdf(grid, sbar, sd))

    def w(q):
        return math.exp(dist.logpdf(q) + stats.norm.logpdf(q, sbar, sd) - shift)

    pts = sorted({sbar, prior.loc})
    num = integrate.quad(lambda q: q * w(q), lo, hi, points=pts, epsrel=1e-8, limit=200)[0]
    den = integrate.quad(w, lo, hi, points=pts, epsrel=1e-8, limit=200)[0]
    if den <= 0:
        raise DegenerateEvidenceError("zero posterior mass")
    return num / den


def posterior_expected_quality(prior: QualityPrior, review: ReviewModel, s: Sequence[float]) -> float:
    """E[Q | s] for a vector of conditionally i.i.d. reviews."""
    if isinstance(review, GaussianNoiseReviews):
        if not isinstance(prior, ContinuousPrior):
            raise ModelError("continuous reviews need a continuous prior")
        return _continuous_posterior_mean(prior, review, s)
    if not isinstance(prior, CategoricalPrior):
        raise ModelError("categorical reviews need a categorical prior")
    return float(posterior_weights(prior, review, s) @ prior.values)


# ---------------------------------------------------------------------------
# Outcome enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutcomeTable:
    """Distinct posterior-mean classes of an m-review round, sorted by ``U``.

    ``lik[k, i]`` is the probability of landing in class ``k`` for a paper of
    quality ``q_i``; ``members[k]`` lists the score-count vectors in the class.
    """

    U: np.ndarray
    lik: np.ndarray
    members: tuple[tuple[tuple[int, ...], ...], ...]
    q_min: float
    q_max: float
    m: int

    @property
    def size(self) -> int:
        return self.U.size

    def class_of(self, u) -> np.ndarray:
        """Index of the class whose posterior mean equals ``u`` (vectorised)."""
        u = np.asarray(u, dtype=float)
        k = np.clip(np.searchsorted(self.U, u), 1, self.size - 1) if self.size > 1 else np.zeros(u.shape, int)
        if self.size > 1:
            left = self.U[k - 1]
            k = np.where(np.abs(u - left) <= np.abs(u - self.U[k]), k - 1, k)
        if np.any(np.abs(self.U[k] - u) > 1e-8):
            raise ModelError("posterior value does not match any outcome class")
        return k


def _multisets(n_scores: int, m: int) -> np.ndarray:
    combos = np.array(list(itertools.combinations_with_replacement(range(n_scores), m)), dtype=np.int64)
    counts = np.zeros((combos.shape[0], n_scores), dtype=np.int64)
    rows = np.repeat(np.arange(combos.shape[0]), m)
    np.add.at(counts, (rows, combos.ravel()), 1)
    return counts


def _log_multinomial(counts: np.ndarray) -> np.ndarray:
    m = counts.sum(axis=1)
    return np.array([math.lgamma(k + 1) for k in m]) - np.vectorize(math.lgamma)(counts + 1).sum(axis=1)


def review_count_loglik(conf: np.ndarray, counts: np.ndarray, with_coef: bool = True) -> np.ndarray:
    """log P(counts | q) for each row of ``counts`` (K, S) -> (K, L)."""
    logc = _log(conf)
    out = np.zeros((counts.shape[0], conf.shape[0]))
    for s in range(conf.shape[1]):
        c = counts[:, s]
        nz = c > 0
        if np.any(nz):
            out[nz] += np.outer(c[nz], logc[:, s])
    if with_coef:
        out += _log_multinomial(counts)[:, None]
    return out


def enumerate_review_outcomes(
    prior: CategoricalPrior, review: ReviewModel, m: int, multiset: bool = True
) -> OutcomeTable:
    """All m-review outcome classes with their likelihoods, sorted by posterior mean.

    Reviews are exchangeable, so multisets with multinomial weights are
    enumerated by default; ``multiset=False`` walks the full |Sigma|^m
    vector space instead (guarded against blow-up).
    """
    conf = as_categorical(review).confusion
    return _enumerate_cached(_key(prior.values), _key(prior.probs), _key(conf), int(m), bool(multiset))


def _key(a: np.ndarray) -> tuple:
    return (a.shape, a.tobytes())


def _unkey(k: tuple) -> np.ndarray:
    shape, buf = k
    return np.frombuffer(buf, dtype=float).reshape(shape)


@lru_cache(maxsize=256)
def _enumerate_cached(vk, pk, ck, m: int, multiset: bool) -> OutcomeTable:
    values, probs, conf = _unkey(vk), _unkey(pk), _unkey(ck)
    S = conf.shape[1]
    if m < 1:
        raise ModelError("m must be at least 1")
    if multiset:
        counts = _multisets(S, m)
        loglik = review_count_loglik(conf, counts, with_coef=True)
    else:
        if S**m > MAX_VECTORS:
            raise OverflowError(f"{S}^{m} review vectors exceeds the enumeration cap {MAX_VECTORS}")
        vecs = np.array(list(itertools.product(range(S), repeat=m)), dtype=np.int64)
        counts = np.zeros((vecs.shape[0], S), dtype=np.int64)
        for j in range(m):
            counts[np.arange(vecs.shape[0]), vecs[:, j]] += 1
        loglik = review_count_loglik(conf, counts, with_coef=False)

    lik = np.exp(loglik)
    marg = lik @ probs
    keep = marg > 0
    counts, lik, marg = counts[keep], lik[keep], marg[keep]
    U = (lik * probs) @ values / marg
    order = np.argsort(U, kind="stable")
    U, lik, counts = U[order], lik[order], counts[order]

    starts = np.concatenate([[True], np.diff(U) >= MERGE_TOL])
    cls = np.cumsum(starts) - 1
    n_cls = cls[-1] + 1
    U_cls = U[starts]
    lik_cls = np.zeros((n_cls, values.size))
    np.add.at(lik_cls, cls, lik)
    members = [[] for _ in range(n_cls)]
    for c, row in zip(cls, counts):
        members[c].append(tuple(int(x) for x in row))
    U_cls = U_cls.copy()
    U_cls.setflags(write=False)
    lik_cls.setflags(write=False)
    return OutcomeTable(
        U=U_cls,
        lik=lik_cls,
        members=tuple(tuple(mm) for mm in members),
        q_min=float(values[0]),
        q_max=float(values[-1]),
        m=m,
    )


# ---------------------------------------------------------------------------
# Threshold realisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RealizedThreshold:
    """Per-class acceptance probabilities for one threshold.

    ``knife`` is the index of the partially accepted class (``None`` when
    every class is accepted or rejected outright) and ``r_eff`` its
    acceptance probability.
    """

    accept: np.ndarray
    knife: int | None
    r_eff: float

    @property
    def accepts_all(self) -> bool:
        return bool(np.all(self.accept == 1.0))

    @property
    def rejects_all(self) -> bool:
        return bool(np.all(self.accept == 0.0))


def threshold_policy_realize(tau: float, outcomes: OutcomeTable) -> RealizedThreshold:
    """Map a bare threshold to a policy via the knife-edge interpolation convention.

    Below the lowest class everything is accepted; at or above the largest
    quality everything is rejected; between the top class and the largest
    quality the top class is accepted with probability
    ``(q_max - tau) / (q_max - U_M)``; otherwise with ``U_i <= tau < U_{i+1}``
    classes above ``i`` are accepted and class ``i`` with probability
    ``(U_{i+1} - tau) / (U_{i+1} - U_i)``.
    """
    U = outcomes.U
    M = U.size
    if M == 0:
        raise ModelError("empty outcome table")
    acc = np.zeros(M)
    if tau < U[0]:
        acc[:] = 1.0
        return RealizedThreshold(acc, None, 1.0)
    if tau >= outcomes.q_max:
        return RealizedThreshold(acc, None, 0.0)
    if tau >= U[-1]:
        r = (outcomes.q_max - tau) / (outcomes.q_max - U[-1])
        acc[-1] = r
        return RealizedThreshold(acc, M - 1, float(r))
    i = int(np.searchsorted(U, tau, side="right")) - 1
    r = (U[i + 1] - tau) / (U[i + 1] - U[i])
    acc[i + 1 :] = 1.0
    acc[i] = r
    return RealizedThreshold(acc, i, float(r))


def threshold_with_r(tau: float, r: float, outcomes: OutcomeTable) -> RealizedThreshold:
    """Literal threshold policy: accept ``U > tau``, ``U == tau`` with probability ``r``."""
    U = outcomes.U
    acc = np.where(U > tau + MERGE_TOL, 1.0, 0.0)
    edge = np.abs(U - tau) <= MERGE_TOL
    knife = None
    if np.any(edge):
        knife = int(np.flatnonzero(edge)[0])
        acc[knife] = r
    return RealizedThreshold(acc, knife, float(r) if knife is not None else float("nan"))


def realize(policy: Threshold, outcomes: OutcomeTable) -> RealizedThreshold:
    if policy.r is None:
        return threshold_policy_realize(policy.tau, outcomes)
    return threshold_with_r(policy.tau, policy.r, outcomes)


# ---------------------------------------------------------------------------
# Acceptance probabilities
# ---------------------------------------------------------------------------


def continuous_acceptance(tau: float, review: GaussianNoiseReviews, m: int, q) -> np.ndarray:
    """P(mean review > tau | q) = 1 - F(tau - q) for the mean-noise law."""
    if tau == -np.inf:
        return np.ones_like(np.asarray(q, dtype=float))
    if tau == np.inf:
        return np.zeros_like(np.asarray(q, dtype=float))
    return review.mean_noise(m).sf(tau - np.asarray(q, dtype=float))


def _general_acceptance(policy: GeneralMemoryless, prior: CategoricalPrior, review: ReviewModel, m: int) -> np.ndarray:
    conf = as_categorical(review)
    S = conf.n_scores
    if S**m > MAX_VECTORS:
        raise OverflowError("too many review vectors for a general memoryless policy")
    out = np.zeros(prior.size)
    for vec in itertools.product(range(S), repeat=m):
        a = policy(tuple(float(conf.scores[j]) for j in vec))
        if a:
            out += a * np.prod(conf.confusion[:, list(vec)], axis=1)
    return out


def acceptance_probabilities(policy, prior: QualityPrior, review: ReviewModel, m: int, q=None) -> np.ndarray:
    """Per-round acceptance probability for every quality in the prior's support
    (categorical) or at the points ``q`` (continuous)."""
    if isinstance(review, GaussianNoiseReviews):
        if not isinstance(policy, Threshold):
            raise ModelError("continuous models support threshold policies only")
        if q is None:
            raise ModelError("continuous acceptance needs quality points q")
        return continuous_acceptance(policy.tau, review, m, q)
    if isinstance(policy, GeneralMemoryless):
        out = _general_acceptance(policy, prior, review, m)
    elif isinstance(policy, Threshold):
        table = enumerate_review_outcomes(prior, review, m)
        out = realize(policy, table).accept @ table.lik
    else:
        raise ModelError(f"{type(policy).__name__} is not a memoryless policy")
    out = np.clip(out, 0.0, 1.0)
    if q is None:
        return out
    idx = np.searchsorted(prior.values, q)
    if np.any(idx >= prior.size) or not np.allclose(prior.values[np.clip(idx, 0, prior.size - 1)], q):
        raise ModelError(f"quality {q} is not in the prior's support")
    return out[idx]


def acceptance_probability(policy, review: ReviewModel, prior: QualityPrior, m: int, q: float) -> float:
    """P_acc(policy, q) for a single quality."""
    return float(np.asarray(acceptance_probabilities(policy, prior, review, m, q=np.asarray([q])))[0])


def binary_setting_review(review: ReviewModel) -> CategoricalReviews:
    return review.as_categorical() if isinstance(review, BinaryReviews) else as_categorical(review)
