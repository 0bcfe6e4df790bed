"""Agent-based simulation of the submit / review / decide loop.

Papers are simulated in ``n_batches`` independent chunks, each with its own
Philox stream spawned from the root seed. Every round draws review and
decision uniforms for *all* papers in a chunk whatever their status, so two
policies run with the same seed see identical randomness (common random
numbers).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .analytics import TIE_BREAKS
from .model import (
    BinaryReviews,
    CategoricalPrior,
    DegenerateEvidenceError,
    GeneralMemoryless,
    ModelError,
    ReviewFollowing,
    RoundDependent,
    Setting,
    Threshold,
    TimeLimitedFixed,
    as_categorical,
)
from .posterior import OutcomeTable, enumerate_review_outcomes, realize, validate_scores

N_BATCHES = 20
TIE_TOL = 1e-12


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


# ---------------------------------------------------------------------------
# Author-side primitives
# ---------------------------------------------------------------------------


def belief_update(belief: np.ndarray, reviews, review) -> np.ndarray:
    """Posterior over qualities after observing review scores."""
    conf = as_categorical(review)
    idx = validate_scores(conf, list(reviews))
    w = np.asarray(belief, dtype=float) * np.prod(conf.confusion[:, idx], axis=1)
    total = w.sum()
    if not total > 0:
        raise DegenerateEvidenceError("reviews have zero probability under the current belief")
    return w / total


def submits(expected_pacc, inv_rho: float, tie_break: str = "not-submit"):
    """Myopic rule: submit iff E[P_acc] beats 1/rho (ties per ``tie_break``)."""
    if tie_break not in TIE_BREAKS:
        raise ModelError(f"tie_break must be one of {TIE_BREAKS}")
    e = np.asarray(expected_pacc, dtype=float)
    if tie_break == "submit":
        return e >= inv_rho - TIE_TOL
    return e > inv_rho + TIE_TOL


def myopic_decision(belief, pacc, author, tie_break: str = "not-submit") -> str:
    """``'submit'`` or ``'sure_bet'`` for one author."""
    return "submit" if submits(np.dot(belief, pacc), author.inv_rho, tie_break) else "sure_bet"


# ---------------------------------------------------------------------------
# Conference rules
# ---------------------------------------------------------------------------


class _CountIndex:
    """Exact lookup from a review-count vector to its outcome class."""

    def __init__(self, table: OutcomeTable, n_scores: int):
        self.base = table.m + 1
        self.weights = self.base ** np.arange(n_scores, dtype=np.int64)
        keys, cls = [], []
        for k, members in enumerate(table.members):
            for c in members:
                keys.append(int(np.dot(c, self.weights)))
                cls.append(k)
        order = np.argsort(keys)
        self.keys = np.asarray(keys, dtype=np.int64)[order]
        self.cls = np.asarray(cls, dtype=np.int64)[order]

    def __call__(self, counts: np.ndarray) -> np.ndarray:
        key = counts @ self.weights
        pos = np.clip(np.searchsorted(self.keys, key), 0, self.keys.size - 1)
        if np.any(self.keys[pos] != key):
            raise DegenerateEvidenceError("review outcome has zero probability under the model")
        return self.cls[pos]


class _RoundwiseRule:
    """Each round judged on its own reviews by a (possibly round-specific) threshold."""

    def __init__(self, setting: Setting, policies: list, table: OutcomeTable):
        self.table = table
        self.index = _CountIndex(table, as_categorical(setting.review).n_scores)
        self.accept = [realize(p, table).accept for p in policies]
        self.pacc = [np.clip(a @ table.lik, 0, 1) for a in self.accept]

    def round_pacc(self, t: int, cum_pos=None) -> np.ndarray:
        return self.pacc[t]

    def accept_prob(self, t: int, round_counts: np.ndarray, cum_counts: np.ndarray) -> np.ndarray:
        return self.accept[t][self.index(round_counts)]


class _ReviewFollowingRule:
    """Binary model: round ``t`` judges the posterior from all reviews so far."""

    def __init__(self, setting: Setting, policy: ReviewFollowing):
        if not isinstance(setting.review, BinaryReviews):
            raise ModelError("review-following policies are simulated for the binary model only")
        self.beta = setting.review.beta
        self.m = setting.m
        self.policy = policy
        T, m = policy.T, setting.m
        # acc[t][K, j]: accept prob in round t with K cumulative positives before, j fresh positives
        self.acc = []
        for t in range(T):
            n_before = m * t
            K = np.arange(n_before + 1)[:, None]
            j = np.arange(m + 1)[None, :]
            if t + 1 in policy.fixed_rounds:
                if policy.tail_rule == "per_round":
                    a = np.broadcast_to(2 * j > m, (K.size, m + 1)).astype(float)
                else:
                    a = (2 * (K + j) - (n_before + m) >= 1).astype(float)
            else:
                u = self.cumulative_posterior(K + j, n_before + m)
                a = (u >= policy.taus[t] - TIE_TOL).astype(float)
            self.acc.append(a)
        self.binom = np.array([stats.binom.pmf(np.arange(m + 1), m, 1 - self.beta), stats.binom.pmf(np.arange(m + 1), m, self.beta)])

    def cumulative_posterior(self, K, N):
        b = self.beta
        if b == 1.0:
            return np.sign(2 * np.asarray(K) - N).astype(float)
        lo = (2 * np.asarray(K, dtype=float) - N) * math.log(b / (1 - b))
        return np.tanh(lo / 2)

    def pacc_table(self, t: int) -> np.ndarray:
        """P(accept in round t | q, K) as an array (K, 2)."""
        return self.acc[t] @ self.binom.T

    def round_pacc(self, t: int, cum_pos: np.ndarray) -> np.ndarray:
        return self.pacc_table(t)[cum_pos]

    def accept_prob(self, t: int, round_counts: np.ndarray, cum_counts: np.ndarray) -> np.ndarray:
        K = cum_counts[:, 1] - round_counts[:, 1]
        return self.acc[t][K, round_counts[:, 1]]


def policy_horizon(policy, T: int) -> int:
    if isinstance(policy, (TimeLimitedFixed, RoundDependent, ReviewFollowing)):
        return policy.T
    return T


def conference_rule(setting: Setting, policy, T: int):
    T = policy_horizon(policy, T)
    if isinstance(policy, ReviewFollowing):
        return _ReviewFollowingRule(setting, policy)
    table = enumerate_review_outcomes(setting.prior, setting.review, setting.m)
    if isinstance(policy, Threshold):
        pols = [policy] * T
    elif isinstance(policy, TimeLimitedFixed):
        pols = [policy.round_policy] * T
    elif isinstance(policy, RoundDependent):
        pols = [Threshold(t, 1.0) for t in policy.taus]
    elif isinstance(policy, GeneralMemoryless):
        raise ModelError("general memoryless maps are evaluated analytically, not simulated")
    else:
        raise ModelError(f"unsupported policy {type(policy).__name__}")
    return _RoundwiseRule(setting, pols, table)


# ---------------------------------------------------------------------------
# Backward induction (binary model)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DPStrategy:
    """``value[t, a, K]`` and ``submit[t, a, K]`` for round ``t`` (0-based), author
    signal ``a`` in {0, 1} and ``K`` positive reviews among the ``m*t`` so far."""

    value: np.ndarray
    submit: np.ndarray
    belief_good: np.ndarray


def _binary_belief(alpha: np.ndarray, beta: float, a: int, K: np.ndarray, N: int) -> np.ndarray:
    """P(good | author signal a, K positives of N reviews) under a uniform prior."""
    lg = _log(alpha[1, a]) + K * _log(beta) + (N - K) * _log(1 - beta)
    lb = _log(alpha[0, a]) + K * _log(1 - beta) + (N - K) * _log(beta)
    with np.errstate(invalid="ignore"):
        out = 1.0 / (1.0 + np.exp(lb - lg))
    return np.where(np.isnan(out), 0.5, out)


def optimal_strategy_dp(setting: Setting, policy, T: int | None = None, tie_break: str = "not-submit") -> DPStrategy:
    """Backward induction over (round, author signal, positive-review count).

    Stopping pays the sure bet (1); submitting pays ``V`` on acceptance and
    ``eta`` times the next round's value on rejection. After the last round
    only the sure bet remains.
    """
    if not isinstance(setting.review, BinaryReviews):
        raise ModelError("optimal DP strategies are available for the binary model only")
    T = policy_horizon(policy, T or 1)
    m = setting.m
    beta = setting.review.beta
    author = setting.author
    alpha = author.signal if author.signal is not None else np.eye(2)
    rule = _ReviewFollowingRule(setting, policy) if isinstance(policy, ReviewFollowing) else conference_rule(setting, policy, T)
    binom = np.array([stats.binom.pmf(np.arange(m + 1), m, 1 - beta), stats.binom.pmf(np.arange(m + 1), m, beta)])
    Kmax = m * T
    value = np.ones((T + 1, 2, Kmax + m + 1))
    submit = np.zeros((T, 2, Kmax + 1), bool)
    bel = np.zeros((T, 2, Kmax + 1))
    if isinstance(rule, _RoundwiseRule):
        j_acc = []
        for t in range(T):
            counts = np.stack([m - np.arange(m + 1), np.arange(m + 1)], axis=1)
            try:
                j_acc.append(rule.accept[t][rule.index(counts)])
            except DegenerateEvidenceError:  # beta == 1 drops mixed outcomes
                acc = np.zeros(m + 1)
                ok = (counts[:, 0] == 0) | (counts[:, 1] == 0)
                acc[ok] = rule.accept[t][rule.index(counts[ok])]
                j_acc.append(acc)
    for t in range(T - 1, -1, -1):
        N = m * t
        K = np.arange(N + 1)
        for a in (0, 1):
            b = _binary_belief(alpha, beta, a, K, N)
            bel[t, a, : N + 1] = b
            cont = np.zeros(N + 1)
            for q, w in ((0, 1 - b), (1, b)):
                if isinstance(rule, _ReviewFollowingRule):
                    acc = rule.acc[t][K]  # (N+1, m+1)
                else:
                    acc = np.broadcast_to(j_acc[t], (N + 1, m + 1))
                nxt = value[t + 1, a, K[:, None] + np.arange(m + 1)[None, :]]
                cont += w * np.sum(binom[q] * (acc * author.V + (1 - acc) * author.eta * nxt), axis=1)
            go = cont > 1 + TIE_TOL if tie_break == "not-submit" else cont >= 1 - TIE_TOL
            submit[t, a, : N + 1] = go
            value[t, a, : N + 1] = np.where(go, cont, 1.0)
    return DPStrategy(value[:T, :, : Kmax + 1], submit, bel)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    setting: Setting
    policy: object
    n: int = 10_000
    T: int = 10
    seed: int = 0
    strategy: str = "myopic"
    tie_break: str = "not-submit"
    n_batches: int = N_BATCHES

    def __post_init__(self):
        if self.n < 1 or self.T < 1:
            raise ModelError("n and T must be at least 1")
        if self.strategy not in ("myopic", "dp"):
            raise ModelError("strategy must be 'myopic' or 'dp'")
        if self.strategy == "dp" and not isinstance(self.setting.review, BinaryReviews):
            raise ModelError("the dp strategy is restricted to the binary model")
        if not isinstance(self.setting.prior, CategoricalPrior) or self.setting.continuous:
            raise ModelError("simulation needs a categorical prior and review model")


@dataclass
class RunMetrics:
    quality: float
    burden: float
    acc_rate: float
    quality_se: float
    burden_se: float
    acc_rate_se: float
    n: int
    m: int
    submitted: np.ndarray
    accepted: np.ndarray
    quality_contrib: np.ndarray
    submissions_total: int = 0
    batch: dict = field(default_factory=dict, repr=False)

    @property
    def reviews(self) -> np.ndarray:
        return self.m * self.submitted

    def summary(self) -> dict:
        return {
            k: getattr(self, k)
            for k in ("quality", "quality_se", "burden", "burden_se", "acc_rate", "acc_rate_se", "n", "m", "submissions_total")
        }


def _batch_sizes(n: int, k: int) -> list[int]:
    k = min(k, n)
    base, extra = divmod(n, k)
    return [base + (i < extra) for i in range(k)]


def _run_batch(cfg: SimConfig, nb: int, seed_seq: np.random.SeedSequence, dp: DPStrategy | None):
    s = cfg.setting
    rng = np.random.Generator(np.random.Philox(seed_seq))
    prior = s.prior
    conf = as_categorical(s.review).confusion
    cum_conf = np.cumsum(conf, axis=1)
    cum_conf[:, -1] = 1.0
    logconf = _log(conf)
    L, S = conf.shape
    m = s.m
    T = policy_horizon(cfg.policy, cfg.T)
    rule = conference_rule(s, cfg.policy, cfg.T)
    inv_rho = s.author.inv_rho

    q_idx = np.searchsorted(np.cumsum(prior.probs)[:-1], rng.random(nb), side="right")
    alpha = s.author.signal
    if alpha is None:
        logb = np.full((nb, L), -np.inf)
        logb[np.arange(nb), q_idx] = 0.0
        sig = q_idx.copy()
    else:
        cum_a = np.cumsum(alpha, axis=1)
        cum_a[:, -1] = 1.0
        sig = (rng.random(nb)[:, None] > cum_a[q_idx]).sum(axis=1)
        logb = _log(prior.probs)[None, :] + _log(alpha[:, sig].T)

    active = np.ones(nb, bool)
    cum = np.zeros((nb, S), dtype=np.int64)
    submitted = np.zeros(T, np.int64)
    accepted = np.zeros(T, np.int64)
    qsum = np.zeros(T)

    for t in range(T):
        u_rev = rng.random((nb, m))
        u_acc = rng.random(nb)
        if dp is not None:
            go = active & dp.submit[t, sig, np.minimum(cum[:, 1], dp.submit.shape[2] - 1)]
        else:
            w = np.exp(logb - logb.max(axis=1, keepdims=True))
            w /= w.sum(axis=1, keepdims=True)
            pacc = rule.round_pacc(t, cum[:, 1]) if isinstance(rule, _ReviewFollowingRule) else rule.round_pacc(t)
            exp_p = np.sum(w * pacc, axis=1)
            go = active & submits(exp_p, inv_rho, cfg.tie_break)
        # authors who decline take the sure bet for good
        active &= go
        if not go.any():
            break
        scores = (u_rev[:, :, None] > cum_conf[q_idx][:, None, :]).sum(axis=2)
        rc = np.zeros((nb, S), dtype=np.int64)
        for j in range(m):
            rc[np.arange(nb), scores[:, j]] += 1
        rc[~go] = 0
        cum += rc
        idx = np.flatnonzero(go)
        pa = rule.accept_prob(t, rc[idx], cum[idx])
        acc = np.zeros(nb, bool)
        acc[idx] = u_acc[idx] < pa
        submitted[t] = go.sum()
        accepted[t] = acc.sum()
        qsum[t] = prior.values[q_idx[acc]].sum()
        active &= ~acc
        logb[go] += rc[go] @ logconf.T
        if np.any(np.all(np.isneginf(logb[go]), axis=1)):
            raise DegenerateEvidenceError("an author's belief lost all mass")
    return submitted, accepted, qsum


def simulate(cfg: SimConfig, jobs: int = 1) -> RunMetrics:
    """Run the simulation; deterministic for a given config and seed, whatever ``jobs`` is."""
    dp = None
    if cfg.strategy == "dp":
        dp = optimal_strategy_dp(cfg.setting, cfg.policy, cfg.T, cfg.tie_break)
    sizes = _batch_sizes(cfg.n, cfg.n_batches)
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_batch, [cfg] * len(sizes), sizes, seqs, [dp] * len(sizes)))
    else:
        results = [_run_batch(cfg, nb, ss, dp) for nb, ss in zip(sizes, seqs)]
    return _aggregate(cfg, sizes, results)


def _aggregate(cfg: SimConfig, sizes, results) -> RunMetrics:
    m = cfg.setting.m
    T = max(r[0].size for r in results)
    sub = np.sum([r[0] for r in results], axis=0)
    acc = np.sum([r[1] for r in results], axis=0)
    qs = np.sum([r[2] for r in results], axis=0)
    n = cfg.n
    sizes = np.asarray(sizes, dtype=float)
    bq = np.array([r[2].sum() for r in results]) / sizes
    bb = np.array([m * r[0].sum() for r in results]) / sizes
    bsub = np.array([r[0].sum() for r in results], dtype=float)
    ba = np.divide(np.array([r[1].sum() for r in results], float), bsub, out=np.zeros_like(bsub), where=bsub > 0)
    k = len(results)

    def se(x):
        return float(np.std(x, ddof=1) / math.sqrt(k)) if k > 1 else math.nan

    total = int(sub.sum())
    return RunMetrics(
        quality=float(qs.sum() / n),
        burden=float(m * total / n),
        acc_rate=float(acc.sum() / total) if total else 0.0,
        quality_se=se(bq),
        burden_se=se(bb),
        acc_rate_se=se(ba),
        n=n,
        m=m,
        submitted=sub,
        accepted=acc,
        quality_contrib=qs / n,
        submissions_total=total,
        batch={"quality": bq, "burden": bb, "acc_rate": ba},
    )


def write_run_csv(metrics: RunMetrics, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["round", "submitted", "accepted", "reviews", "quality_contrib"])
    for t in range(metrics.submitted.size):
        w.writerow([t + 1, int(metrics.submitted[t]), int(metrics.accepted[t]), int(metrics.reviews[t]), format(metrics.quality_contrib[t], ".12g")])


def simulated_sweep(setting: Setting, taus, n: int, T: int, seed: int, strategy: str = "myopic", tie_break: str = "not-submit", jobs: int = 1):
    """Simulated QB points over thresholds (``theta`` is not observable and reported as NaN)."""
    from .analytics import QBPoint, pareto_filter

    pts = []
    for tau in taus:
        r = simulate(SimConfig(setting, Threshold(float(tau)), n=n, T=T, seed=seed, strategy=strategy, tie_break=tie_break), jobs=jobs)
        pts.append(QBPoint(float(tau), math.nan, math.nan, r.quality, r.burden, r.acc_rate))
    return pareto_filter(pts)
