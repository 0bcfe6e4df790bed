import io

import numpy as np
import pytest

from conftest import binary_setting
from oracles import two_round_best_value
from reviewsim.abm import (
    SimConfig,
    belief_update,
    myopic_decision,
    optimal_strategy_dp,
    simulate,
    simulated_sweep,
    submits,
    write_run_csv,
)
from reviewsim.analytics import evaluate_threshold
from reviewsim.model import (
    AuthorModel,
    BinaryReviews,
    DegenerateEvidenceError,
    ModelError,
    ReviewFollowing,
    RoundDependent,
    Threshold,
    TimeLimitedFixed,
    binary_prior,
)


def test_belief_update_by_hand():
    b = belief_update([0.5, 0.5], [1, 1], BinaryReviews(0.75))
    np.testing.assert_allclose(b, [0.1, 0.9])
    b2 = belief_update(b, [0], BinaryReviews(0.75))
    # one negative review undoes one positive
    np.testing.assert_allclose(b2, [0.25, 0.75])


def test_belief_update_degenerate():
    with pytest.raises(DegenerateEvidenceError):
        belief_update([1.0, 0.0], [1], BinaryReviews(1.0))


def test_submits_and_myopic_decision():
    assert submits(0.31, 0.3) and not submits(0.3, 0.3)
    assert submits(0.3, 0.3, "submit")
    a = AuthorModel.from_rho(10 / 3)
    assert myopic_decision([0.5, 0.5], [0.1, 0.7], a) == "submit"
    assert myopic_decision([0.9, 0.1], [0.1, 0.7], a) == "sure_bet"
    with pytest.raises(ModelError):
        submits(0.5, 0.3, "maybe")


def test_simconfig_validation(iclr_setting):
    with pytest.raises(ModelError):
        SimConfig(iclr_setting, Threshold(0.0), strategy="dp")
    with pytest.raises(ModelError):
        SimConfig(iclr_setting, Threshold(0.0), n=0)


@pytest.mark.parametrize("taus", [(0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (0.6, 0.5)])
@pytest.mark.parametrize("alpha", [0.6, 0.8])
def test_dp_matches_exhaustive_two_round_search(taus, alpha):
    beta, V, eta = 0.75, 5.0, 0.7
    s = binary_setting(beta=beta, m=1, V=V, eta=eta, alpha=alpha)
    pol = RoundDependent(taus)
    dp = optimal_strategy_dp(s, pol)
    # U = +-0.5 for one review at beta 0.75; 'U >= tau' rule
    acc = [[float(u >= t) for u in (-0.5, 0.5)] for t in taus]
    for a in (0, 1):
        want = two_round_best_value(beta, alpha, 1 if a == 1 else -1, V, eta, acc)
        assert dp.value[0, a, 0] == pytest.approx(want, abs=1e-12)


def test_dp_restricted_to_binary(iclr_setting):
    with pytest.raises(ModelError):
        optimal_strategy_dp(iclr_setting, TimeLimitedFixed(0.0, 3))


def test_seed_determinism_and_jobs_invariance(iclr_setting):
    cfg = SimConfig(iclr_setting, Threshold(-0.3), n=4000, T=20, seed=11)
    a, b = simulate(cfg), simulate(cfg, jobs=2)
    assert a.summary() == b.summary()
    np.testing.assert_array_equal(a.submitted, b.submitted)
    c = simulate(SimConfig(iclr_setting, Threshold(-0.3), n=4000, T=20, seed=12))
    assert c.summary() != a.summary()


def test_burden_identity(iclr_setting):
    r = simulate(SimConfig(iclr_setting, Threshold(-0.3), n=3000, T=30, seed=1))
    assert r.burden == pytest.approx(3 * r.submitted.sum() / r.n)
    assert r.accepted.sum() <= r.n
    assert r.quality == pytest.approx(r.quality_contrib.sum())
    assert np.all(r.submitted[1:] <= r.submitted[:-1])


def test_noiseless_simulation_tracks_closed_form(iclr_setting):
    pol = Threshold(-0.2)
    r = simulate(SimConfig(iclr_setting, pol, n=20_000, T=60, seed=5))
    pt = evaluate_threshold(iclr_setting, pol)
    assert abs(r.quality - pt.quality) <= 4 * r.quality_se
    assert abs(r.burden - pt.burden) <= 4 * r.burden_se
    assert abs(r.acc_rate - pt.acc_rate) <= 4 * r.acc_rate_se


def test_near_perfect_author_signal_matches_noiseless():
    pol = Threshold(0.5, r=1.0)
    exact = simulate(SimConfig(binary_setting(beta=0.75), pol, n=20_000, T=40, seed=2))
    noisy = simulate(SimConfig(binary_setting(beta=0.75, alpha=1 - 1e-9), pol, n=20_000, T=40, seed=2))
    se = np.hypot(exact.quality_se, noisy.quality_se)
    assert abs(exact.quality - noisy.quality) <= 4 * se
    assert abs(exact.burden - noisy.burden) <= 4 * np.hypot(exact.burden_se, noisy.burden_se)


def test_dp_author_utility_beats_myopic():
    # DP value is at least the one-shot myopic value for each signal
    s = binary_setting(beta=0.75, m=3, V=5.0, eta=0.5, alpha=0.75)
    dp = optimal_strategy_dp(s, TimeLimitedFixed(0.5, 5, r=1.0))
    P_good = 0.84375  # 2+ of 3 positives at 0.75
    for a, w_good in ((0, 0.25), (1, 0.75)):
        p = w_good * P_good + (1 - w_good) * (1 - P_good)
        one_shot = max(1.0, p * 5 + (1 - p) * 0.5)
        assert dp.value[0, a, 0] >= one_shot - 1e-12


def test_dp_strategy_simulation_runs():
    s = binary_setting(beta=0.75, m=3, V=5.0, eta=0.5, alpha=0.75)
    r = simulate(SimConfig(s, ReviewFollowing([0.5] * 5, frozenset({4, 5})), n=2000, T=5, seed=0, strategy="dp"))
    assert 0 < r.quality <= 0.5 and r.burden > 0


def test_run_csv_columns(iclr_setting):
    r = simulate(SimConfig(iclr_setting, Threshold(0.0), n=500, T=3, seed=0))
    buf = io.StringIO()
    write_run_csv(r, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "round,submitted,accepted,reviews,quality_contrib"
    assert len(lines) == 1 + r.submitted.size


def test_simulated_sweep_flags(iclr_setting):
    pts = simulated_sweep(iclr_setting, [-0.5, 0.0, 0.5], n=1000, T=10, seed=0)
    assert len(pts) == 3 and any(p.pareto for p in pts)
    assert all(np.isnan(p.theta) for p in pts)


def test_author_noise_gap_shrinks_towards_noiseless():
    pol = Threshold(0.5, r=1.0)
    exact = evaluate_threshold(binary_setting(beta=0.75), pol)
    gaps = {}
    for alpha in (0.9, 0.99, 1.0):
        r = simulate(SimConfig(binary_setting(beta=0.75, alpha=alpha), pol, n=20_000, T=40, seed=9))
        gaps[alpha] = (abs(r.quality - exact.quality), abs(r.burden - exact.burden), r.quality_se, r.burden_se)
    for k in (0, 1):
        assert gaps[0.99][k] <= gaps[0.9][k] + 3 * gaps[0.99][k + 2]
        assert gaps[1.0][k] <= 3 * gaps[1.0][k + 2]
