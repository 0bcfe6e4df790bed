"""Orderings on signal structures: monotone likelihood ratio and Blackwell garbling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .model import ModelError, ReviewModel, as_categorical, check_row_stochastic, mix_rows_uniform

MLR_SLACK = 1e-12
BLACKWELL_TOL = 1e-9
MAX_SIGNALS = 16

mix_with_uniform = mix_rows_uniform


@dataclass(frozen=True)
class MLRResult:
    """Outcome of an MLR check.

    ``violation`` is ``((q, q'), (s, s'))`` index pairs for the first strict
    ratio failure, with ``ratios`` the two likelihood ratios compared there.
    ``full_support`` is reported separately from ratio failures.
    """

    ok: bool
    full_support: bool
    violation: tuple[tuple[int, int], tuple[int, int]] | None = None
    ratios: tuple[float, float] | None = None

    def __bool__(self) -> bool:
        return self.ok


def check_mlr(review: ReviewModel | np.ndarray) -> MLRResult:
    """True iff beta_{q'}(s') / beta_q(s') > beta_{q'}(s) / beta_q(s) for all q < q', s < s'.

    Ratios are compared cross-multiplied, so zero entries do not divide;
    a zero anywhere marks the matrix as lacking full support.
    """
    mat = review if isinstance(review, np.ndarray) else as_categorical(review).confusion
    mat = np.asarray(mat, dtype=float)
    full = bool(np.all(mat > 0))
    L, S = mat.shape
    for i in range(L):
        for j in range(i + 1, L):
            lo, hi = mat[i], mat[j]
            for s in range(S):
                for t in range(s + 1, S):
                    if hi[t] * lo[s] <= hi[s] * lo[t] + MLR_SLACK:
                        with np.errstate(divide="ignore", invalid="ignore"):
                            ratios = (float(hi[t] / lo[t]), float(hi[s] / lo[s]))
                        return MLRResult(False, full, ((i, j), (s, t)), ratios)
    return MLRResult(full, full)


def check_blackwell(beta: np.ndarray, beta_prime: np.ndarray) -> np.ndarray | None:
    """Row-stochastic gamma with ``beta @ gamma == beta_prime``, or ``None``.

    Solved as an LP feasibility problem; a returned garbling is verified to
    reproduce ``beta_prime`` within 1e-9 entrywise.
    """
    beta = np.asarray(beta, dtype=float)
    beta_prime = np.asarray(beta_prime, dtype=float)
    if beta.ndim != 2 or beta_prime.ndim != 2 or beta.shape[0] != beta_prime.shape[0]:
        raise ModelError(f"shape mismatch: {beta.shape} vs {beta_prime.shape}")
    L, S = beta.shape
    Sp = beta_prime.shape[1]
    if max(S, Sp) > MAX_SIGNALS:
        raise ModelError(f"signal spaces larger than {MAX_SIGNALS} are not supported")
    check_row_stochastic(beta, "beta", tol=1e-9)
    check_row_stochastic(beta_prime, "beta_prime", tol=1e-9)

    # gamma flattened row-major: var index s * Sp + t
    n = S * Sp
    A_eq = np.zeros((L * Sp + S, n))
    b_eq = np.zeros(L * Sp + S)
    for q in range(L):
        for t in range(Sp):
            A_eq[q * Sp + t, t::Sp] = beta[q]
            b_eq[q * Sp + t] = beta_prime[q, t]
    for s in range(S):
        A_eq[L * Sp + s, s * Sp : (s + 1) * Sp] = 1.0
        b_eq[L * Sp + s] = 1.0
    res = linprog(np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    gamma = np.clip(res.x.reshape(S, Sp), 0, None)
    gamma /= gamma.sum(axis=1, keepdims=True)
    if np.max(np.abs(beta @ gamma - beta_prime)) > BLACKWELL_TOL:
        return None
    return gamma


def outcome_signal_matrix(table) -> np.ndarray:
    """Treat each outcome class of an m-review round as a single signal (L x M)."""
    return np.asarray(table.lik).T.copy()
