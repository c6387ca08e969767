import math

import numpy as np
import pytest

from riskgrad.policies import (
    ContextualLinearGaussianPolicy,
    DiagonalGaussianPolicy,
    FourierFeatureMap,
    contextual_sample,
    fisher_information,
    load_policy,
    log_density,
    median_bandwidth,
    policy_from_text,
    policy_to_text,
    random_fourier_map,
    rff_features,
    sample,
    save_policy,
    score,
    score_batch,
    softmax_portfolio,
)
from helpers import central_difference, quad_density_mass


def test_policy_validation():
    with pytest.raises(ValueError):
        DiagonalGaussianPolicy(mean=[0.0, 1.0], log_std=[0.0])
    with pytest.raises(ValueError):
        DiagonalGaussianPolicy(mean=[float("inf")], log_std=[0.0])
    pol = DiagonalGaussianPolicy(mean=[1.0, 2.0], log_std=[0.0, math.log(2.0)])
    assert pol.dim == 2
    np.testing.assert_allclose(pol.sigma, [1.0, 2.0])


def test_sample_vanishing_variance():
    pol = DiagonalGaussianPolicy(mean=[0.0], log_std=[-20.0])
    draws = sample(pol, np.random.default_rng(0), 3)
    assert np.all(np.abs(draws) < 1e-8)


def test_sample_law_of_large_numbers():
    pol = DiagonalGaussianPolicy(mean=[1.0, -2.0], log_std=[0.0, math.log(0.5)])
    draws = sample(pol, np.random.default_rng(1), 100_000)
    bound = 4.0 * pol.sigma / math.sqrt(100_000)
    assert np.all(np.abs(draws.mean(axis=0) - pol.mean) < bound)


def test_sample_deterministic_under_seed():
    pol = DiagonalGaussianPolicy(mean=[0.0, 0.0], log_std=[0.0, 0.0])
    a = sample(pol, np.random.default_rng(123), 50)
    b = sample(pol, np.random.default_rng(123), 50)
    np.testing.assert_array_equal(a, b)


def test_log_density_at_mode():
    pol = DiagonalGaussianPolicy(mean=[0.0], log_std=[0.0])
    assert log_density(pol, [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi))
    # mode is the maximum
    assert log_density(pol, [0.3]) < log_density(pol, [0.0])


def test_log_density_integrates_to_one():
    pol = DiagonalGaussianPolicy(mean=[0.7], log_std=[math.log(1.3)])
    mass = quad_density_mass(lambda x: log_density(pol, [x]), -12.0, 13.0)
    assert mass == pytest.approx(1.0, abs=1e-4)


def test_log_density_dimension_mismatch():
    pol = DiagonalGaussianPolicy(mean=[0.0, 0.0], log_std=[0.0, 0.0])
    with pytest.raises(ValueError):
        log_density(pol, [0.0])


def test_score_at_mode_and_one_sigma():
    pol = DiagonalGaussianPolicy(mean=[1.0, -1.0], log_std=[0.0, math.log(2.0)])
    s = score(pol, pol.mean)
    np.testing.assert_allclose(s[:2], 0.0)
    np.testing.assert_allclose(s[2:], -1.0)
    s1 = score(pol, pol.mean + pol.sigma)
    np.testing.assert_allclose(s1[2:], 0.0, atol=1e-14)


def test_score_matches_finite_differences():
    pol = DiagonalGaussianPolicy(mean=[0.4, -1.2], log_std=[0.1, -0.3])
    theta = np.array([1.1, -0.2])

    def logp(omega):
        p = DiagonalGaussianPolicy(mean=omega[:2], log_std=omega[2:])
        return log_density(p, theta)

    fd = central_difference(logp, np.concatenate([pol.mean, pol.log_std]))
    s = score(pol, theta)
    np.testing.assert_allclose(s, fd, rtol=1e-5)


def test_score_mean_is_zero_over_policy():
    pol = DiagonalGaussianPolicy(mean=[0.5, -0.5], log_std=[0.0, math.log(0.5)])
    n = 100_000
    scores = score_batch(pol, sample(pol, np.random.default_rng(9), n))
    bound = 4.0 * math.sqrt(fisher_information(pol).sum() / n)
    assert np.linalg.norm(scores.mean(axis=0)) < bound


def test_fisher_matches_score_outer_product():
    for log_std in (0.0, math.log(2.0)):
        pol = DiagonalGaussianPolicy(mean=[0.0], log_std=[log_std])
        scores = score_batch(pol, sample(pol, np.random.default_rng(17), 1_000_000))
        emp = scores.T @ scores / len(scores)
        analytic = np.diag(fisher_information(pol))
        np.testing.assert_allclose(np.diag(emp), np.diag(analytic), rtol=0.02)
        assert abs(emp[0, 1]) < 0.02 * analytic.max()


def test_fisher_entries_positive():
    pol = DiagonalGaussianPolicy(mean=[0.0, 0.0], log_std=[-15.0, 8.0])
    assert np.all(fisher_information(pol) > 0)


def test_softmax_uniform_and_shift_invariance():
    x = softmax_portfolio(np.zeros(30))
    np.testing.assert_allclose(x, np.full(30, 1 / 30))
    theta = np.array([0.3, -1.0, 2.0])
    np.testing.assert_allclose(softmax_portfolio(theta),
                               softmax_portfolio(theta + 5.0), atol=1e-15)


def test_softmax_hand_value_and_simplex():
    np.testing.assert_allclose(softmax_portfolio(np.log([1.0, 2.0, 3.0])),
                               [1 / 6, 2 / 6, 3 / 6], atol=1e-15)
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = softmax_portfolio(rng.normal(0, 50, size=10))
        assert np.all(x > 0)
        assert x.sum() == pytest.approx(1.0, abs=1e-12)


def test_rff_constant_feature_and_bounds():
    fmap = FourierFeatureMap(frequencies=np.zeros((4, 2)),
                             phases=np.full(4, math.pi / 2), bandwidth=1.0)
    np.testing.assert_allclose(rff_features([0.3, -0.7], fmap), 1.0)
    rng = np.random.default_rng(3)
    fmap = random_fourier_map(3, 50, 0.8, rng)
    feats = rff_features(rng.normal(0, 5, size=(100, 3)), fmap)
    assert np.all(np.abs(feats) <= 1.0)


def test_rff_lipschitz_bound():
    rng = np.random.default_rng(4)
    fmap = random_fourier_map(2, 64, 0.5, rng, bias=False)
    w_norm = np.linalg.norm(fmap.frequencies, 2)
    for _ in range(20):
        s = rng.normal(0, 1, size=2)
        t = s + rng.normal(0, 0.01, size=2)
        lhs = np.linalg.norm(rff_features(s, fmap) - rff_features(t, fmap))
        assert lhs <= w_norm * np.linalg.norm(s - t) / fmap.bandwidth + 1e-12


def test_feature_map_validation():
    with pytest.raises(ValueError):
        FourierFeatureMap(frequencies=np.zeros((2, 2)), phases=np.zeros(2), bandwidth=0.0)
    with pytest.raises(ValueError):
        FourierFeatureMap(frequencies=np.zeros((2, 2)), phases=[0.0, 7.0], bandwidth=1.0)


def test_median_bandwidth():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert median_bandwidth(pts) == pytest.approx(1.0)
    assert median_bandwidth(np.zeros((5, 2))) == 1.0  # degenerate pilot falls back


def test_contextual_sample_moments():
    rng = np.random.default_rng(6)
    fmap = random_fourier_map(2, 20, 1.0, rng)
    weights = rng.normal(0, 0.5, size=(20, 3))
    pol = ContextualLinearGaussianPolicy(weights=weights, log_std=np.zeros(3),
                                         feature_map=fmap)
    s = np.array([0.2, 0.4])
    target = pol.mean_action(s)

    tight = ContextualLinearGaussianPolicy(weights=weights, log_std=np.full(3, -20.0),
                                           feature_map=fmap)
    assert np.all(np.abs(contextual_sample(tight, s, rng) - target) < 1e-8)

    n = 100_000
    draws = contextual_sample(pol, np.tile(s, (n, 1)), rng)
    bound = 4.0 * pol.sigma / math.sqrt(n)
    assert np.all(np.abs(draws.mean(axis=0) - target) < bound)


def test_contextual_zero_weights_centered_at_origin():
    rng = np.random.default_rng(13)
    fmap = random_fourier_map(2, 10, 1.0, rng)
    pol = ContextualLinearGaussianPolicy(weights=np.zeros((10, 2)),
                                         log_std=np.full(2, -20.0), feature_map=fmap)
    draw = contextual_sample(pol, [0.1, 0.1], rng)
    assert np.all(np.abs(draw) < 1e-8)


def test_contextual_validation():
    rng = np.random.default_rng(0)
    fmap = random_fourier_map(2, 10, 1.0, rng)
    with pytest.raises(ValueError):
        ContextualLinearGaussianPolicy(weights=np.zeros((10, 2)), log_std=np.zeros(3),
                                       feature_map=fmap)
    with pytest.raises(ValueError):
        ContextualLinearGaussianPolicy(weights=np.zeros((9, 2)), log_std=np.zeros(2),
                                       feature_map=fmap)


def test_policy_text_round_trip(tmp_path):
    pol = DiagonalGaussianPolicy(mean=[0.1234567890123456, -7.0],
                                 log_std=[-0.5, 0.25])
    path = tmp_path / "plain.txt"
    save_policy(pol, path)
    back = load_policy(path)
    np.testing.assert_array_equal(back.mean, pol.mean)
    np.testing.assert_array_equal(back.log_std, pol.log_std)

    rng = np.random.default_rng(21)
    fmap = random_fourier_map(2, 8, 0.37, rng)
    ctx = ContextualLinearGaussianPolicy(weights=rng.normal(size=(8, 2)),
                                         log_std=rng.normal(size=2), feature_map=fmap)
    back = policy_from_text(policy_to_text(ctx))
    np.testing.assert_array_equal(back.weights, ctx.weights)
    np.testing.assert_array_equal(back.feature_map.frequencies, fmap.frequencies)
    np.testing.assert_array_equal(back.feature_map.phases, fmap.phases)
    assert back.feature_map.bandwidth == fmap.bandwidth


def test_policies_are_immutable():
    pol = DiagonalGaussianPolicy(mean=[0.0], log_std=[0.0])
    with pytest.raises(Exception):
        pol.mean[0] = 1.0
