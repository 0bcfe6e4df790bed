"""Threshold and review-count searches for noiseless authors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analytics import (
    SubmissionSet,
    conference_quality,
    evaluate_threshold,
    optimal_threshold_continuous,
    submit_mask,
)
from .model import CategoricalPrior, ModelError, Setting, Threshold
from .posterior import OutcomeTable, enumerate_review_outcomes, threshold_policy_realize


def acceptance_breakpoints(table: OutcomeTable) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints of the piecewise-linear map tau -> P_acc(q) under the knife-edge convention.

    Returns ``(taus, F)`` with ``F[k, i]`` the acceptance probability of
    quality ``i`` at ``taus[k]``; the map is linear in between, equal to 1
    below the first breakpoint and 0 from the last on.
    """
    tail = np.cumsum(table.lik[::-1], axis=0)[::-1]
    taus = np.concatenate([table.U, [table.q_max]])
    F = np.vstack([tail, np.zeros((1, table.lik.shape[1]))])
    return taus, F


def _min_tau_reaching(taus: np.ndarray, f: np.ndarray, target: float) -> float:
    """Smallest tau with f(tau) <= target for a non-increasing piecewise-linear f."""
    k = int(np.argmax(f <= target))
    if k == 0:
        return -math.inf
    f0, f1 = f[k - 1], f[k]
    return float(taus[k - 1] + (f0 - target) / (f0 - f1) * (taus[k] - taus[k - 1]))


@dataclass(frozen=True)
class LenientResult:
    tau: float | None
    feasible: bool
    reason: str = ""


def lenient_threshold_for(setting: Setting, theta: float) -> LenientResult:
    """Smallest tau under which exactly the qualities above ``theta`` keep submitting.

    Each excluded quality pins a lower bound on tau (its acceptance chance
    must fall to ``1/rho``); the largest bound is checked against every
    admitted quality, which must still strictly clear ``1/rho``.
    """
    prior = setting.prior
    table = enumerate_review_outcomes(prior, setting.review, setting.m)
    taus, F = acceptance_breakpoints(table)
    target = setting.author.inv_rho
    out = np.flatnonzero(prior.values <= theta)
    inn = prior.values > theta
    if out.size == 0:
        tau = -math.inf
        P = np.ones(prior.size)
    else:
        tau = max(_min_tau_reaching(taus, F[:, i], target) for i in out)
        P = threshold_policy_realize(tau, table).accept @ table.lik
        # adjacent classes can sit ~1e-8 apart, so the interpolated tau may land a few ulps short
        for _ in range(256):
            if np.all(P[out] <= target + 1e-12):
                break
            tau = float(np.nextafter(tau, math.inf))
            P = threshold_policy_realize(tau, table).accept @ table.lik
    if not np.all(submit_mask(P[inn], target)):
        return LenientResult(None, False, f"an admitted quality fails to clear 1/rho at tau={tau:.6g}")
    return LenientResult(tau, True)


def most_lenient_threshold(setting: Setting) -> LenientResult:
    """Smallest tau under which exactly the positive qualities keep submitting."""
    if setting.continuous:
        return LenientResult(optimal_threshold_continuous(setting.author, setting.review, setting.m), True)
    prior = setting.prior
    prior.require_mixed_signs()
    res = lenient_threshold_for(setting, float(prior.values[prior.values < 0].max()))
    if not res.feasible:
        return LenientResult(None, False, res.reason.replace("an admitted", "a positive"))
    return res


@dataclass
class MSearchResult:
    m_star: int | None
    burden: dict[int, float] = field(default_factory=dict)
    tau: dict[int, float] = field(default_factory=dict)
    excluded: dict[int, str] = field(default_factory=dict)


def _burden_at_max_quality(setting: Setting) -> tuple[float, float] | str:
    res = most_lenient_threshold(setting)
    if not res.feasible:
        return res.reason
    return res.tau, evaluate_threshold(setting, Threshold(res.tau)).burden


def optimal_m_search(setting: Setting, m_range=range(1, 11)) -> MSearchResult:
    """Review count minimising burden among maximum-quality thresholds."""
    out = MSearchResult(None)
    for m in m_range:
        r = _burden_at_max_quality(setting.with_(m=m))
        if isinstance(r, str):
            out.excluded[m] = r
            continue
        out.tau[m], out.burden[m] = r
    if out.burden:
        out.m_star = min(out.burden, key=lambda k: (out.burden[k], k))
    return out


def expected_rounds(setting: Setting, tau: float) -> float:
    """Mean number of rounds a submitted paper spends under review."""
    table = enumerate_review_outcomes(setting.prior, setting.review, setting.m)
    P = threshold_policy_realize(tau, table).accept @ table.lik
    mask = submit_mask(P, setting.author.inv_rho)
    if not mask.any():
        return 0.0
    p = setting.prior.probs[mask]
    return float(np.sum(p / P[mask]) / np.sum(p))


@dataclass(frozen=True)
class ConstrainedResult:
    m: int | None
    burden: float | None
    rounds: float | None
    feasible: bool
    report: str = ""


def constrained_m_search(setting: Setting, max_rounds: float, m_range=range(1, 11)) -> ConstrainedResult:
    """Smallest m whose maximum-quality threshold keeps expected rounds within ``max_rounds``."""
    if not max_rounds > 1:
        raise ModelError("the round bound must exceed 1")
    notes = []
    for m in m_range:
        s = setting.with_(m=m)
        res = most_lenient_threshold(s)
        if not res.feasible:
            notes.append(f"m={m}: {res.reason}")
            continue
        rounds = expected_rounds(s, res.tau)
        if rounds <= max_rounds:
            return ConstrainedResult(m, evaluate_threshold(s, Threshold(res.tau)).burden, rounds, True)
        notes.append(f"m={m}: {rounds:.4g} expected rounds")
    return ConstrainedResult(None, None, None, False, "; ".join(notes))


def max_quality(prior: CategoricalPrior) -> float:
    return conference_quality(prior, SubmissionSet(mask=prior.values > 0))
