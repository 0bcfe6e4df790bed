import numpy as np
import pytest

from reviewsim.model import (
    AuthorModel,
    BinaryReviews,
    CategoricalPrior,
    CategoricalReviews,
    ContinuousPrior,
    DivergenceError,
    GaussianNoiseReviews,
    GeneralMemoryless,
    ModelError,
    ReviewFollowing,
    RoundDependent,
    Setting,
    Threshold,
    TimeLimitedFixed,
    binary_prior,
    mix_rows_uniform,
    validate_scores,
)


def test_rho_roundtrip():
    a = AuthorModel(5.0, 0.7)
    assert a.rho == pytest.approx(43 / 3)
    assert a.inv_rho == pytest.approx(3 / 43)
    b = AuthorModel.from_rho(a.rho, eta=0.7)
    assert b.V == pytest.approx(5.0)


@pytest.mark.parametrize("V,eta", [(1.0, 0.5), (0.5, 0.5), (5, 0.0), (5, 1.0)])
def test_author_rejects_bad_preferences(V, eta):
    with pytest.raises(ModelError):
        AuthorModel(V, eta)


def test_author_signal_must_be_stochastic():
    with pytest.raises(ModelError):
        AuthorModel(5, 0.7, np.array([[0.5, 0.6], [0.5, 0.5]]))


def test_binary_author_signal_expands():
    a = AuthorModel(5, 0.7, BinaryReviews(0.8))
    np.testing.assert_allclose(a.signal, [[0.8, 0.2], [0.2, 0.8]])


def test_prior_validation():
    with pytest.raises(ModelError):
        CategoricalPrior([1, 0], [0.5, 0.5])
    with pytest.raises(ModelError):
        CategoricalPrior([0, 1], [0.6, 0.6])
    with pytest.raises(ModelError):
        CategoricalPrior([0, 1, 2], [0.5, 0.5])
    with pytest.raises(ModelError):
        ContinuousPrior("uniform")
    with pytest.raises(ModelError):
        ContinuousPrior("gaussian", scale=0)


def test_prior_arrays_are_read_only():
    p = binary_prior()
    with pytest.raises(ValueError):
        p.values[0] = 3


def test_cauchy_has_no_mean():
    c = ContinuousPrior("cauchy")
    assert not c.has_mean
    with pytest.raises(DivergenceError):
        c.mean()
    assert ContinuousPrior("laplace", loc=0.3).mean() == 0.3


def test_review_validation():
    with pytest.raises(ModelError):
        BinaryReviews(0.5)
    with pytest.raises(ModelError):
        GaussianNoiseReviews(0.0)
    with pytest.raises(ModelError):
        CategoricalReviews(scores=[0, 1], confusion=[[0.2, 0.7]])


def test_mean_noise_scales_with_m():
    g = GaussianNoiseReviews(2.0)
    assert g.mean_noise(4).std() == pytest.approx(1.0)


def test_mix_rows_uniform():
    out = mix_rows_uniform(np.eye(2), 0.5)
    np.testing.assert_allclose(out, [[0.75, 0.25], [0.25, 0.75]])
    with pytest.raises(ModelError):
        mix_rows_uniform(np.eye(2), 1.5)


def test_setting_shape_checks():
    a = AuthorModel(5, 0.7)
    with pytest.raises(ModelError):
        Setting(ContinuousPrior("gaussian"), BinaryReviews(0.8), a)
    with pytest.raises(ModelError):
        Setting(CategoricalPrior([-1, 0, 1], [1 / 3] * 3), BinaryReviews(0.8), a)
    with pytest.raises(ModelError):
        Setting(binary_prior(), BinaryReviews(0.8), a, m=0)
    s = Setting(binary_prior(), BinaryReviews(0.8), a, m=2)
    assert s.with_(m=3).m == 3 and s.m == 2


def test_policy_validation():
    with pytest.raises(ModelError):
        Threshold(0.0, r=1.5)
    with pytest.raises(ModelError):
        Threshold(float("nan"))
    with pytest.raises(ModelError):
        TimeLimitedFixed(0.0, T=0)
    with pytest.raises(ModelError):
        RoundDependent([])
    with pytest.raises(ModelError):
        ReviewFollowing([0.0], tail_rule="bogus")
    assert RoundDependent([0, 0.5]).T == 2
    assert TimeLimitedFixed(0.2, 3, r=1).round_policy == Threshold(0.2, 1)


def test_general_memoryless_range_check():
    pol = GeneralMemoryless(lambda s: 2.0)
    with pytest.raises(ModelError):
        pol((0,))


def test_validate_scores():
    rev = CategoricalReviews(scores=[0, 1, 2], confusion=np.eye(3))
    np.testing.assert_array_equal(validate_scores(rev, [2, 0]), [2, 0])
    with pytest.raises(ModelError):
        validate_scores(rev, [3])
