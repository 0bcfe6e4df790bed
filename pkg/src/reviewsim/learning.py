"""Learning (p, beta, quality values) from review scores with EM and cross-validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import logsumexp

from .model import ModelError

N_SCORES = 10
INIT_MIX = 0.05


class ParseError(ModelError):
    pass


@dataclass(frozen=True)
class ReviewDataset:
    papers: tuple[np.ndarray, ...]
    ids: tuple[str, ...] = ()
    source: str = ""
    dropped: int = 0

    def __post_init__(self):
        if not self.papers:
            raise ModelError("dataset has no papers with reviews")
        for p in self.papers:
            if p.size == 0 or p.min() < 0 or p.max() >= N_SCORES:
                raise ModelError(f"scores must lie in 0..{N_SCORES - 1}")

    def __len__(self) -> int:
        return len(self.papers)

    def counts(self) -> np.ndarray:
        return np.stack([np.bincount(p, minlength=N_SCORES) for p in self.papers])

    def mean_scores(self) -> np.ndarray:
        return np.array([p.mean() for p in self.papers])

    def subset(self, idx) -> "ReviewDataset":
        ids = tuple(self.ids[i] for i in idx) if self.ids else ()
        return ReviewDataset(tuple(self.papers[i] for i in idx), ids, self.source)


def ingest_reviews(lines: Iterable[str], source: str = "") -> ReviewDataset:
    """Group newline-delimited ``{"paper_id": ..., "rating": 0..9}`` records by paper.

    A record with ``"rating": null`` registers a paper without reviews; such
    papers are dropped and counted in ``dropped``.
    """
    by_id: dict[str, list[int]] = {}
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            pid = str(rec["paper_id"])
            rating = rec["rating"]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ParseError(f"line {lineno}: malformed record ({e.__class__.__name__}: {e})") from None
        scores = by_id.setdefault(pid, [])
        if rating is None:
            continue
        if isinstance(rating, bool) or not isinstance(rating, (int, float)) or rating != int(rating) or not 0 <= rating < N_SCORES:
            raise ParseError(f"line {lineno}: rating {rating!r} is not an integer in 0..{N_SCORES - 1}")
        scores.append(int(rating))
    kept = {k: v for k, v in by_id.items() if v}
    if not kept:
        raise ParseError("no reviews found in input")
    return ReviewDataset(
        tuple(np.asarray(v, dtype=np.int64) for v in kept.values()),
        tuple(kept),
        source,
        dropped=len(by_id) - len(kept),
    )


def sample_dataset(p, beta, n_papers: int, reviews_per_paper: int = 3, seed: int = 0) -> tuple[ReviewDataset, np.ndarray]:
    """Synthetic papers drawn from a categorical model; returns (dataset, true categories)."""
    rng = np.random.default_rng(seed)
    p = np.asarray(p, float)
    beta = np.asarray(beta, float)
    cats = rng.choice(p.size, size=n_papers, p=p / p.sum())
    papers = tuple(rng.choice(beta.shape[1], size=reviews_per_paper, p=beta[c] / beta[c].sum()) for c in cats)
    return ReviewDataset(papers, source="synthetic"), cats


# ---------------------------------------------------------------------------
# EM
# ---------------------------------------------------------------------------


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def _joint(counts: np.ndarray, p: np.ndarray, beta: np.ndarray) -> np.ndarray:
    # 0 * log 0 counts as 0; any observed score with zero probability rules the category out
    zero = beta <= 0
    out = _log(p)[None, :] + counts @ np.where(zero, 0.0, _log(np.where(zero, 1.0, beta))).T
    out[counts @ zero.T.astype(float) > 0] = -np.inf
    return out


def log_likelihood(counts: np.ndarray, p: np.ndarray, beta: np.ndarray) -> float:
    """Mean per-paper log-likelihood of the ordered review vectors."""
    return float(np.mean(logsumexp(_joint(counts, p, beta), axis=1)))


def responsibilities(counts: np.ndarray, p: np.ndarray, beta: np.ndarray) -> np.ndarray:
    j = _joint(counts, p, beta)
    return np.exp(j - logsumexp(j, axis=1, keepdims=True))


def _initial_beta(counts: np.ndarray, L: int) -> np.ndarray:
    mean = (counts @ np.arange(N_SCORES)) / counts.sum(axis=1)
    order = np.argsort(mean, kind="stable")
    beta = np.empty((L, N_SCORES))
    for k, chunk in enumerate(np.array_split(order, L)):
        h = counts[chunk].sum(axis=0).astype(float)
        h = h / h.sum() if h.sum() > 0 else np.full(N_SCORES, 1 / N_SCORES)
        beta[k] = (1 - INIT_MIX) * h + INIT_MIX / N_SCORES
    return beta


def sort_by_expected_score(p: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(beta @ np.arange(beta.shape[1]), kind="stable")
    return p[order], beta[order]


@dataclass
class EMResult:
    p: np.ndarray
    beta: np.ndarray
    test_loglik: float
    best_iter: int
    history: np.ndarray

    @property
    def L(self) -> int:
        return self.p.size


def em_fit(train: ReviewDataset, L: int, test: ReviewDataset | None = None, iters: int = 100, perturb: float = 0.01) -> EMResult:
    """EM over a latent category per paper with a shared score distribution per category.

    After every M-step each row is pulled toward uniform by ``perturb``; the
    snapshot with the highest held-out log-likelihood is returned (earliest
    on ties). Without ``test`` the training data is used for selection.
    """
    if L < 1:
        raise ModelError("L must be at least 1")
    if len(train) == 0:
        raise ModelError("empty training split")
    C = train.counts().astype(float)
    Ct = test.counts().astype(float) if test is not None else C
    p = np.full(L, 1.0 / L)
    beta = _initial_beta(C, L)
    hist = np.empty(iters)
    best = (-math.inf, -1, p, beta)
    for it in range(iters):
        r = responsibilities(C, p, beta)
        p = r.mean(axis=0)
        w = r.T @ C
        tot = w.sum(axis=1, keepdims=True)
        beta = np.where(tot > 0, w / np.where(tot > 0, tot, 1), 1.0 / N_SCORES)
        beta = (1 - perturb) * beta + perturb / N_SCORES
        ll = log_likelihood(Ct, p, beta)
        hist[it] = ll
        if ll > best[0]:
            best = (ll, it, p.copy(), beta.copy())
    ps, bs = sort_by_expected_score(best[2], best[3])
    return EMResult(ps, bs, best[0], best[1], hist)


@dataclass
class CVResult:
    best_L: int
    p: np.ndarray
    beta: np.ndarray
    mean_loglik: dict[int, float]
    fold_results: dict[int, list[EMResult]] = field(default_factory=dict, repr=False)


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def _fit_fold(args):
    data, L, train_idx, test_idx, iters, perturb = args
    return em_fit(data.subset(train_idx), L, data.subset(test_idx), iters, perturb)


def cross_validate(
    data: ReviewDataset,
    L_range=range(2, 11),
    folds: int = 5,
    seed: int = 0,
    iters: int = 100,
    perturb: float = 0.01,
    jobs: int = 1,
) -> CVResult:
    """Pick L by mean held-out log-likelihood; parameters are the fold-wise best snapshots averaged."""
    if len(data) < folds:
        raise ModelError("need at least as many papers as folds")
    parts = fold_indices(len(data), folds, seed)
    tasks = []
    for L in L_range:
        for f in range(folds):
            train = np.concatenate([parts[g] for g in range(folds) if g != f])
            tasks.append((data, L, train, parts[f], iters, perturb))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_fit_fold, tasks))
    else:
        results = [_fit_fold(t) for t in tasks]
    by_L: dict[int, list[EMResult]] = {}
    for t, r in zip(tasks, results):
        by_L.setdefault(t[1], []).append(r)
    mean_ll = {L: float(np.mean([r.test_loglik for r in rs])) for L, rs in by_L.items()}
    best_L = max(mean_ll, key=lambda L: (mean_ll[L], -L))
    rs = by_L[best_L]
    p = np.mean([r.p for r in rs], axis=0)
    beta = np.mean([r.beta for r in rs], axis=0)
    return CVResult(best_L, p / p.sum(), beta / beta.sum(axis=1, keepdims=True), mean_ll, by_L)


# ---------------------------------------------------------------------------
# Quality values
# ---------------------------------------------------------------------------


def psi(x):
    """Decreasing-then-flipped logistic map of a mean score in [0, 9] onto the reals."""
    x = np.asarray(x, dtype=float)
    return np.log((x + 0.01) / (9.01 - x))


def quality_values(data: ReviewDataset, p: np.ndarray, beta: np.ndarray, link=psi) -> np.ndarray:
    """Responsibility-weighted average of ``link(mean score)`` per category."""
    r = responsibilities(data.counts().astype(float), np.asarray(p, float), np.asarray(beta, float))
    mass = r.sum(axis=0)
    if not np.all(mass > 0):
        raise ModelError("a category has zero total responsibility; its quality is undefined")
    return (r.T @ link(data.mean_scores())) / mass


def learned_model_dict(p, beta, q, name: str = "learned", V: float = 5.0, eta: float = 0.7) -> dict:
    """Config-schema mapping for a fitted model (authors share the reviewers' matrix)."""
    return {
        "name": name,
        "prior": {"kind": "categorical", "values": [float(x) for x in q], "probs": [float(x) for x in p]},
        "review": {"kind": "categorical", "scores": list(range(N_SCORES)), "confusion": np.asarray(beta).tolist()},
        "author": {"kind": "same-as-review", "V": V, "eta": eta},
    }
