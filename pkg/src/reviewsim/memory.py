"""Search over multi-round (memory) policies by simulation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .abm import SimConfig, _ReviewFollowingRule, conference_rule, simulate
from .analytics import pareto_flags
from .model import ModelError, ReviewFollowing, RoundDependent, Setting, TimeLimitedFixed
from .posterior import enumerate_review_outcomes

FAMILIES = ("fixed", "round-dependent", "review-following")


def default_grid(step: float = 0.05) -> np.ndarray:
    """Thresholds -1, -1 + step, ..., strictly below 1."""
    n = int(round(2 / step))
    return np.round(-1 + step * np.arange(n), 10)


def majority_tau(setting: Setting) -> float:
    """Threshold under which 'U >= tau' accepts exactly when most fresh reviews are positive."""
    table = enumerate_review_outcomes(setting.prior, setting.review, setting.m)
    ok = [k for k, mem in enumerate(table.members) if all(2 * c[-1] > setting.m for c in mem)]
    return float(table.U[min(ok)])


@dataclass
class MemoryPoint:
    taus: tuple[float, ...]
    quality: float
    burden: float
    quality_se: float
    burden_se: float
    members: list = field(default_factory=list, repr=False)
    pareto: bool = False


@dataclass
class MemorySearchResult:
    family: str
    points: list[MemoryPoint]

    @property
    def pareto(self) -> list[MemoryPoint]:
        return sorted((p for p in self.points if p.pareto), key=lambda p: p.burden)

    def best(self) -> list[MemoryPoint]:
        par = self.pareto
        top = max(p.quality for p in par)
        return [p for p in par if p.quality == top]


def build_policy(family: str, taus, T: int, tail_tau: float, fixed_rounds=(4, 5), tail_rule: str = "per_round"):
    taus = tuple(float(t) for t in taus)
    if family == "fixed":
        return TimeLimitedFixed(taus[0], T, r=1.0)
    full = list(taus) + [tail_tau] * (T - len(taus))
    if family == "round-dependent":
        return RoundDependent(full)
    if family == "review-following":
        return ReviewFollowing(full, frozenset(fixed_rounds), tail_rule)
    raise ModelError(f"family must be one of {FAMILIES}")


def _behaviour_key(setting: Setting, policy) -> bytes:
    rule = conference_rule(setting, policy, policy.T)
    arrs = rule.acc if isinstance(rule, _ReviewFollowingRule) else rule.accept
    return b"|".join(np.ascontiguousarray(a).tobytes() for a in arrs)


def policy_search_memory(
    setting: Setting,
    family: str,
    grid=None,
    T: int = 5,
    free_rounds: int = 3,
    n: int = 10_000,
    seed: int = 0,
    strategy: str = "dp",
    tail_rule: str = "per_round",
    jobs: int = 1,
) -> MemorySearchResult:
    """Simulate every candidate threshold vector and flag the (quality, burden) Pareto set.

    Candidates that induce identical acceptance rules are simulated once
    (with common random numbers they would give identical metrics); each
    reported point carries every grid vector that maps to it, and ``taus`` is
    the most lenient of them.
    """
    if family not in FAMILIES:
        raise ModelError(f"family must be one of {FAMILIES}")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    tail = majority_tau(setting)
    fixed_rounds = tuple(range(free_rounds + 1, T + 1))
    combos = [(t,) for t in grid] if family == "fixed" else list(itertools.product(grid, repeat=free_rounds))

    groups: dict[bytes, list] = {}
    policies: dict[bytes, object] = {}
    for taus in combos:
        pol = build_policy(family, taus, T, tail, fixed_rounds, tail_rule)
        key = _behaviour_key(setting, pol)
        groups.setdefault(key, []).append(tuple(float(x) for x in taus))
        policies.setdefault(key, pol)

    points = []
    for key, members in groups.items():
        r = simulate(SimConfig(setting, policies[key], n=n, T=T, seed=seed, strategy=strategy), jobs=jobs)
        rep = min(members, key=lambda v: (sum(v), v))
        points.append(MemoryPoint(rep, r.quality, r.burden, r.quality_se, r.burden_se, members))
    flags = pareto_flags([p.quality for p in points], [p.burden for p in points])
    for p, f in zip(points, flags):
        p.pareto = bool(f)
    return MemorySearchResult(family, points)


def weakly_dominated_share(front: list[MemoryPoint], other: list[MemoryPoint]) -> float:
    """Fraction of ``other`` points weakly dominated by some point of ``front``."""
    if not other:
        return 1.0
    hit = sum(any(f.quality >= o.quality and f.burden <= o.burden for f in front) for o in other)
    return hit / len(other)
