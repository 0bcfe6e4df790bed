"""Equilibrium quantities for noiseless authors.

Authors who know their paper's quality keep resubmitting iff the per-round
acceptance probability beats ``1/rho``; everything here follows from that
submission set and the geometric number of rounds a submitted paper needs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, optimize

from .model import (
    CategoricalPrior,
    ContinuousPrior,
    DivergenceError,
    GaussianNoiseReviews,
    ModelError,
    Setting,
    Threshold,
)
from .posterior import (
    acceptance_probabilities,
    continuous_acceptance,
    enumerate_review_outcomes,
    realize,
)

TIE_BREAKS = ("not-submit", "submit")
INDIFF_TOL = 1e-9
ROOT_TOL = 1e-9
P_FLOOR = 1e-12
QUAD_EPSREL = 1e-8
CSV_FIELDS = ("tau", "r_eff", "theta", "quality", "burden", "acc_rate", "pareto")


# ---------------------------------------------------------------------------
# Submission sets and de facto thresholds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubmissionSet:
    """Which qualities end up submitted.

    Categorical models carry a boolean ``mask`` over the prior's support;
    continuous models carry the cutoff ``theta`` (papers with ``q > theta``
    submit).
    """

    mask: np.ndarray | None = None
    theta: float | None = None

    @classmethod
    def nothing(cls, prior) -> "SubmissionSet":
        if isinstance(prior, CategoricalPrior):
            return cls(mask=np.zeros(prior.size, bool))
        return cls(theta=math.inf)

    @classmethod
    def from_threshold(cls, prior, theta: float) -> "SubmissionSet":
        if isinstance(prior, CategoricalPrior):
            return cls(mask=prior.values >= theta)
        return cls(theta=float(theta))


@dataclass(frozen=True)
class DeFactoThreshold:
    """Boundary of the submission set.

    ``lower`` is the largest quality that does not submit and ``upper`` the
    smallest that does (equal in the continuous model). Any value between
    them is a valid de facto threshold; ``theta`` reports ``lower``.
    """

    lower: float
    upper: float
    indifferent: tuple[float, ...] = ()
    trivial: str | None = None
    submission: SubmissionSet = field(default_factory=SubmissionSet)

    @property
    def theta(self) -> float:
        return self.lower

    def admits(self, x: float) -> bool:
        return self.lower <= x <= self.upper


def _check_tie_break(tie_break: str) -> None:
    if tie_break not in TIE_BREAKS:
        raise ModelError(f"tie_break must be one of {TIE_BREAKS}")


def submit_mask(P: np.ndarray, inv_rho: float, tie_break: str = "not-submit") -> np.ndarray:
    """Noiseless best response per quality given per-round acceptance probabilities."""
    _check_tie_break(tie_break)
    P = np.asarray(P, dtype=float)
    indiff = np.abs(P - inv_rho) <= INDIFF_TOL
    above = (P > inv_rho) & ~indiff
    return above | indiff if tie_break == "submit" else above


def _categorical_threshold(prior: CategoricalPrior, P: np.ndarray, inv_rho: float, tie_break: str) -> DeFactoThreshold:
    mask = submit_mask(P, inv_rho, tie_break)
    indiff = tuple(float(q) for q in prior.values[np.abs(P - inv_rho) <= INDIFF_TOL])
    trivial = None
    if np.all(P >= 1.0 - 1e-15):
        trivial = "accept-all"
    elif np.all(P <= 1e-15):
        trivial = "reject-all"
    out = prior.values[~mask]
    inn = prior.values[mask]
    lower = float(out.max()) if out.size else -math.inf
    upper = float(inn.min()) if inn.size else math.inf
    return DeFactoThreshold(lower, upper, indiff, trivial, SubmissionSet(mask=mask))


def _bisect_increasing(f, target: float, x0: float, step: float = 1.0) -> float:
    """Root of increasing ``f(x) = target`` with bracket expansion."""
    lo, hi = x0 - step, x0 + step
    while f(lo) > target:
        step *= 2
        lo = x0 - step
    step = 1.0
    while f(hi) < target:
        step *= 2
        hi = x0 + step
    return optimize.bisect(lambda x: f(x) - target, lo, hi, xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps, maxiter=400)


def continuous_de_facto(tau: float, review: GaussianNoiseReviews, m: int, inv_rho: float) -> float:
    if tau == -math.inf:
        return -math.inf
    if tau == math.inf:
        return math.inf
    sf = gaussian_sf(review.sigma / math.sqrt(m))
    return _bisect_increasing(lambda q: sf(tau - q), inv_rho, tau)


def de_facto_threshold(policy, setting: Setting, tie_break: str = "not-submit") -> DeFactoThreshold:
    """Where noiseless authors stop submitting under a memoryless ``policy``."""
    _check_tie_break(tie_break)
    inv_rho = setting.author.inv_rho
    if setting.continuous:
        if not isinstance(policy, Threshold):
            raise ModelError("continuous models support threshold policies only")
        theta = continuous_de_facto(policy.tau, setting.review, setting.m, inv_rho)
        trivial = {-math.inf: "accept-all", math.inf: "reject-all"}.get(theta)
        return DeFactoThreshold(theta, theta, (), trivial, SubmissionSet(theta=theta))
    P = acceptance_probabilities(policy, setting.prior, setting.review, setting.m)
    return _categorical_threshold(setting.prior, P, inv_rho, tie_break)


def optimal_threshold_continuous(author, review: GaussianNoiseReviews, m: int = 1) -> float:
    """Threshold whose de facto threshold is exactly zero: the (V-1)/(V-eta) noise quantile."""
    level = (author.V - 1) / (author.V - author.eta)
    return float(review.mean_noise(m).ppf(level))


def resubmission_gap(policy, setting: Setting, tie_break: str = "not-submit") -> float:
    """``tau - theta`` for a threshold policy."""
    if not isinstance(policy, Threshold):
        raise ModelError("resubmission gap is defined for threshold policies")
    d = de_facto_threshold(policy, setting, tie_break)
    if d.trivial:
        raise ModelError(f"gap undefined for a trivial ({d.trivial}) policy")
    return policy.tau - d.theta


# ---------------------------------------------------------------------------
# Integrals over continuous priors
# ---------------------------------------------------------------------------


def scalar_pdf(prior: ContinuousPrior):
    """Plain-float density; scipy's frozen distributions are slow per scalar call."""
    mu, b = prior.loc, prior.scale
    if prior.family == "gaussian":
        c = 1.0 / (b * math.sqrt(2 * math.pi))
        return lambda q: c * math.exp(-0.5 * ((q - mu) / b) ** 2)
    if prior.family == "laplace":
        return lambda q: math.exp(-abs(q - mu) / b) / (2 * b)
    return lambda q: 1.0 / (math.pi * b * (1 + ((q - mu) / b) ** 2))


def gaussian_sf(sd: float):
    k = 1.0 / (sd * math.sqrt(2))
    return lambda x: 0.5 * math.erfc(x * k)


def _quad(f, a, b) -> float:
    return integrate.quad(f, a, b, epsrel=QUAD_EPSREL, epsabs=0.0, limit=400)[0]


def prior_integral(prior: ContinuousPrior, g, lo: float = -math.inf) -> float:
    """Integral of ``g(q) p(q)`` over ``q > lo``.

    Semi-infinite pieces are compactified with ``q = a + u/(1-u)``; Cauchy
    priors use ``q = loc + scale * tan(v)`` so that ``p(q) dq = dv / pi``.
    """
    if lo == math.inf:
        return 0.0
    if prior.family == "cauchy":
        v0 = -math.pi / 2 if lo == -math.inf else math.atan((lo - prior.loc) / prior.scale)
        return _quad(lambda v: g(prior.loc + prior.scale * math.tan(v)), v0, math.pi / 2) / math.pi

    pdf = scalar_pdf(prior)
    a = prior.loc

    def right(u, base):
        q = base + u / (1 - u)
        return g(q) * pdf(q) / (1 - u) ** 2

    def left(u, base):
        q = base - u / (1 - u)
        return g(q) * pdf(q) / (1 - u) ** 2

    if lo == -math.inf:
        return _quad(lambda u: left(u, a), 0, 1) + _quad(lambda u: right(u, a), 0, 1)
    if lo < a:
        return _quad(lambda q: g(q) * pdf(q), lo, a) + _quad(lambda u: right(u, a), 0, 1)
    return _quad(lambda u: right(u, lo), 0, 1)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _require_categorical_mask(sub: SubmissionSet) -> np.ndarray:
    if sub.mask is None:
        raise ModelError("categorical prior needs a mask submission set")
    return sub.mask


def conference_quality(prior, submission: SubmissionSet) -> float:
    """Expected accepted quality per new paper in steady state."""
    if isinstance(prior, CategoricalPrior):
        mask = _require_categorical_mask(submission)
        return float(np.sum(prior.probs[mask] * prior.values[mask]))
    if not prior.has_mean:
        raise DivergenceError("conference quality is undefined for a Cauchy prior")
    return prior_integral(prior, lambda q: q, submission.theta)


def _acc_fn(policy, setting: Setting):
    if setting.continuous:
        tau = policy.tau
        sf = gaussian_sf(setting.review.sigma / math.sqrt(setting.m))
        return lambda q: sf(tau - q)
    return None


def _check_positive(P: np.ndarray) -> None:
    if np.any(P < P_FLOOR):
        raise DivergenceError("a submitted quality has acceptance probability below 1e-12")


def review_burden(prior, submission: SubmissionSet, policy, m: int, setting: Setting | None = None, P=None) -> float:
    """Expected total reviews per new paper: ``m * sum_S p_q / P_acc(q)``."""
    if isinstance(prior, CategoricalPrior):
        mask = _require_categorical_mask(submission)
        if not mask.any():
            return 0.0
        if P is None:
            P = acceptance_probabilities(policy, prior, setting.review, m)
        _check_positive(P[mask])
        return float(m * np.sum(prior.probs[mask] / P[mask]))
    acc = _acc_fn(policy, setting)
    if submission.theta == math.inf:
        return 0.0
    return m * prior_integral(prior, lambda q: 1.0 / max(acc(q), P_FLOOR), submission.theta)


def acceptance_rate(prior, submission: SubmissionSet, policy, m: int, setting: Setting | None = None, P=None) -> float:
    """Accepted over submitted papers per round in steady state; 0 when nothing is submitted."""
    if isinstance(prior, CategoricalPrior):
        mask = _require_categorical_mask(submission)
        if not mask.any():
            return 0.0
        if P is None:
            P = acceptance_probabilities(policy, prior, setting.review, m)
        _check_positive(P[mask])
        return float(np.sum(prior.probs[mask]) / np.sum(prior.probs[mask] / P[mask]))
    if submission.theta == math.inf:
        return 0.0
    acc = _acc_fn(policy, setting)
    mass = prior.sf(submission.theta) if submission.theta > -math.inf else 1.0
    denom = prior_integral(prior, lambda q: 1.0 / max(acc(q), P_FLOOR), submission.theta)
    return float(mass / denom)


# ---------------------------------------------------------------------------
# QB sweeps
# ---------------------------------------------------------------------------


@dataclass
class QBPoint:
    tau: float
    r_eff: float
    theta: float
    quality: float
    burden: float
    acc_rate: float
    pareto: bool = False


def evaluate_threshold(setting: Setting, policy: Threshold, tie_break: str = "not-submit") -> QBPoint:
    """Steady-state (quality, burden, acceptance rate) for one threshold."""
    prior = setting.prior
    if setting.continuous:
        d = de_facto_threshold(policy, setting, tie_break)
        sub = d.submission
        try:
            quality = conference_quality(prior, sub)
        except DivergenceError:
            quality = math.nan
        burden = review_burden(prior, sub, policy, setting.m, setting)
        rate = acceptance_rate(prior, sub, policy, setting.m, setting)
        return QBPoint(policy.tau, math.nan, d.theta, quality, burden, rate)
    table = enumerate_review_outcomes(prior, setting.review, setting.m)
    real = realize(policy, table)
    P = np.clip(real.accept @ table.lik, 0.0, 1.0)
    d = _categorical_threshold(prior, P, setting.author.inv_rho, tie_break)
    sub = d.submission
    return QBPoint(
        tau=policy.tau,
        r_eff=real.r_eff,
        theta=d.theta,
        quality=conference_quality(prior, sub),
        burden=review_burden(prior, sub, policy, setting.m, setting, P=P),
        acc_rate=acceptance_rate(prior, sub, policy, setting.m, setting, P=P),
    )


def default_tau_grid(setting: Setting, n: int = 400, tau_min: float | None = None, tau_max: float | None = None) -> np.ndarray:
    """Evenly spaced taus; categorical models add every outcome-class breakpoint and,
    for each achievable submission set, the most lenient tau realising it
    (these are the corners of the noiseless QB curve)."""
    prior = setting.prior
    if setting.continuous:
        noise = setting.review.sigma
        lo_q, hi_q = prior.loc - 3 * prior.scale, prior.loc + 3 * prior.scale
    else:
        noise = 0.0
        lo_q, hi_q = prior.support
    lo = lo_q - 3 * noise if tau_min is None else tau_min
    hi = hi_q + 3 * noise if tau_max is None else tau_max
    grid = np.linspace(lo, hi, n)
    if not setting.continuous:
        from .search import lenient_threshold_for

        U = enumerate_review_outcomes(prior, setting.review, setting.m).U
        corners = [lenient_threshold_for(setting, float(v)) for v in prior.values[:-1]]
        extra = np.array([c.tau for c in corners if c.feasible and math.isfinite(c.tau)])
        extra = np.concatenate([U, extra])
        grid = np.concatenate([grid, extra[(extra >= lo) & (extra <= hi)]])
    return np.unique(grid)


def qb_sweep(
    setting: Setting,
    taus: Iterable[float] | None = None,
    tie_break: str = "not-submit",
    endpoints: bool = True,
    jobs: int = 1,
) -> list[QBPoint]:
    """One QBPoint per threshold, Pareto-flagged, ordered by tau.

    ``endpoints`` adds the accept-all (tau = -inf) and reject-all
    (tau = +inf) policies.
    """
    taus = list(default_tau_grid(setting) if taus is None else taus)
    if endpoints:
        taus = [-math.inf] + taus + [math.inf]
    taus = sorted(set(float(t) for t in taus))
    pols = [Threshold(t) for t in taus]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            points = list(ex.map(evaluate_threshold, [setting] * len(pols), pols, [tie_break] * len(pols)))
    else:
        points = [evaluate_threshold(setting, p, tie_break) for p in pols]
    return pareto_filter(points)


def pareto_flags(quality: Sequence[float], burden: Sequence[float]) -> np.ndarray:
    """Not strictly dominated in (quality up, burden down). NaN quality is never Pareto."""
    q = np.asarray(quality, dtype=float)
    b = np.asarray(burden, dtype=float)
    flags = np.zeros(q.size, bool)
    ok = ~(np.isnan(q) | np.isnan(b))
    idx = np.flatnonzero(ok)
    order = idx[np.lexsort((b[idx], -q[idx]))]
    best_prev = math.inf
    i = 0
    while i < order.size:
        j = i
        while j < order.size and q[order[j]] == q[order[i]]:
            j += 1
        group = order[i:j]
        gmin = b[group].min()
        for k in group:
            flags[k] = b[k] == gmin and b[k] < best_prev
        best_prev = min(best_prev, gmin)
        i = j
    return flags


def pareto_filter(points: list[QBPoint]) -> list[QBPoint]:
    flags = pareto_flags([p.quality for p in points], [p.burden for p in points])
    for p, f in zip(points, flags):
        p.pareto = bool(f)
    return points


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    return format(float(x), ".12g")


def write_points_csv(points: Iterable[QBPoint], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for p in points:
        d = asdict(p)
        w.writerow([_fmt(d[k]) for k in CSV_FIELDS])


def points_to_csv(points: Iterable[QBPoint]) -> str:
    buf = io.StringIO()
    write_points_csv(points, buf)
    return buf.getvalue()


def read_points_csv(fh) -> list[QBPoint]:
    rows = list(csv.DictReader(fh))
    if rows and set(CSV_FIELDS) - set(rows[0]):
        raise ModelError(f"CSV is missing columns {sorted(set(CSV_FIELDS) - set(rows[0]))}")
    return [
        QBPoint(**{k: float(r[k]) for k in CSV_FIELDS[:-1]}, pareto=r["pareto"].strip().lower() == "true")
        for r in rows
    ]


# ---------------------------------------------------------------------------
# Time-limited fixed thresholds
# ---------------------------------------------------------------------------


def time_limited_metrics(tau: float, r: float | None, T: int, setting: Setting, tie_break: str = "not-submit") -> tuple[float, float]:
    """(quality, burden) when a paper gets at most ``T`` rounds at this venue.

    The submission set is that of the unlimited policy; a submitted paper is
    accepted with probability ``1 - (1 - P)^T`` after an expected
    ``(1 - (1 - P)^T) / P`` rounds.
    """
    if T < 1:
        raise ModelError("T must be at least 1")
    pol = Threshold(tau, r)
    prior, m = setting.prior, setting.m
    d = de_facto_threshold(pol, setting, tie_break)
    if setting.continuous:
        acc = _acc_fn(pol, setting)
        if d.theta == math.inf:
            return 0.0, 0.0

        def reach(q):
            return 1.0 - (1.0 - acc(q)) ** T

        quality = math.nan
        if prior.has_mean:
            quality = prior_integral(prior, lambda q: q * reach(q), d.theta)
        burden = m * prior_integral(prior, lambda q: reach(q) / max(acc(q), P_FLOOR), d.theta)
        return quality, burden
    P = acceptance_probabilities(pol, prior, setting.review, m)
    mask = d.submission.mask
    if not mask.any():
        return 0.0, 0.0
    Ps = P[mask]
    _check_positive(Ps)
    reach = 1.0 - (1.0 - Ps) ** T
    quality = float(np.sum(prior.probs[mask] * prior.values[mask] * reach))
    burden = float(m * np.sum(prior.probs[mask] * reach / Ps))
    return quality, burden


def evaluate_time_limited(setting: Setting, tau: float, T: int, r: float | None = None, tie_break: str = "not-submit") -> QBPoint:
    """QBPoint for a T-round fixed threshold; ``acc_rate`` is accepted over submission events."""
    quality, burden = time_limited_metrics(tau, r, T, setting, tie_break)
    d = de_facto_threshold(Threshold(tau, r), setting, tie_break)
    r_eff = math.nan
    if not setting.continuous:
        r_eff = realize(Threshold(tau, r), enumerate_review_outcomes(setting.prior, setting.review, setting.m)).r_eff
    _, mass_accepted = time_limited_metrics_mass(tau, r, T, setting, tie_break)
    rate = mass_accepted / (burden / setting.m) if burden > 0 else 0.0
    return QBPoint(tau, r_eff, d.theta, quality, burden, rate)


def time_limited_metrics_mass(tau: float, r: float | None, T: int, setting: Setting, tie_break: str = "not-submit") -> tuple[float, float]:
    """(submitted mass, accepted mass) under a T-round fixed threshold."""
    pol = Threshold(tau, r)
    prior = setting.prior
    d = de_facto_threshold(pol, setting, tie_break)
    if setting.continuous:
        if d.theta == math.inf:
            return 0.0, 0.0
        acc = _acc_fn(pol, setting)
        sub = prior.sf(d.theta) if d.theta > -math.inf else 1.0
        return float(sub), prior_integral(prior, lambda q: 1.0 - (1.0 - acc(q)) ** T, d.theta)
    P = acceptance_probabilities(pol, prior, setting.review, setting.m)
    mask = d.submission.mask
    return float(prior.probs[mask].sum()), float(np.sum(prior.probs[mask] * (1.0 - (1.0 - P[mask]) ** T)))


def qb_sweep_time_limited(setting: Setting, T: int, taus: Iterable[float] | None = None, tie_break: str = "not-submit") -> list[QBPoint]:
    taus = sorted(set(float(t) for t in (default_tau_grid(setting) if taus is None else taus)))
    return pareto_filter([evaluate_time_limited(setting, t, T, None, tie_break) for t in taus])
