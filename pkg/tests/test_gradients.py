import math

import numpy as np
import pytest

from riskgrad.envs import lin_toy_objective_exact, lin_toy_returns, lin_toy_reward
from riskgrad.gradients import (
    AscentConfig,
    AscentError,
    QuadratureError,
    RolloutBatch,
    additive_baseline_pg,
    ascend,
    estimate_gradient,
    exact_gradient_point,
    gradient_field,
    natural_precondition,
    risk_pg,
    risk_pg_neutral,
)
from riskgrad.policies import DiagonalGaussianPolicy, fisher_information, sample
from helpers import standardized_policy_batch


def _batch(policy, rng, n, reward=lambda th: th[:, 0]):
    thetas = sample(policy, rng, n)
    return RolloutBatch(thetas, reward(thetas))


def test_rollout_batch_validation():
    with pytest.raises(ValueError):
        RolloutBatch(np.zeros((3, 1)), np.zeros(2))
    with pytest.raises(ValueError):
        RolloutBatch(np.zeros((1, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        RolloutBatch(np.array([[np.inf]] * 2), np.zeros(2))


def test_risk_pg_constant_returns_bound():
    # uniform weights leave -(1/gamma) times the raw score mean
    pol = DiagonalGaussianPolicy(mean=[0.0, 0.0], log_std=[0.0, 0.0])
    rng = np.random.default_rng(0)
    n, gamma = 4000, 0.5
    thetas = sample(pol, rng, n)
    grad = risk_pg(RolloutBatch(thetas, np.full(n, 2.0)), pol, gamma)
    bound = 4.0 * math.sqrt(fisher_information(pol).sum()) / (abs(gamma) * math.sqrt(n))
    assert np.linalg.norm(grad) < bound


def test_risk_pg_rejects_neutral_gamma():
    pol = DiagonalGaussianPolicy(mean=[0.0], log_std=[0.0])
    batch = _batch(pol, np.random.default_rng(1), 10)
    with pytest.raises(ValueError):
        risk_pg(batch, pol, 1e-12)


def test_risk_pg_linear_gaussian_mean():
    # R(theta) = theta: exact gradient of mu - gamma sigma^2 / 2 in covariant
    # coordinates is (1, -gamma sigma^2)
    pol = DiagonalGaussianPolicy(mean=[0.0], log_std=[0.0])
    rng = np.random.default_rng(2)
    grads = np.array([risk_pg(_batch(pol, rng, 10_000), pol, 1.0) for _ in range(200)])
    se = grads.std(axis=0) / math.sqrt(len(grads))
    err = np.abs(grads.mean(axis=0) - np.array([1.0, -1.0]))
    assert np.all(err < 4 * se)


@pytest.mark.parametrize("gamma", [-1.0, -0.1, 0.1, 1.0])
def test_risk_pg_unbiased_linear_gaussian(gamma):
    pol = DiagonalGaussianPolicy(mean=[0.3], log_std=[math.log(0.8)])
    sigma2 = float(pol.sigma[0] ** 2)
    rng = np.random.default_rng(40 + int(gamma * 10))
    grads = np.array([risk_pg(_batch(pol, rng, 10_000), pol, gamma) for _ in range(200)])
    se = grads.std(axis=0) / math.sqrt(len(grads))
    err = np.abs(grads.mean(axis=0) - np.array([1.0, -gamma * sigma2]))
    assert np.all(err < 4 * se)


def test_risk_pg_neutral_values():
    pol = DiagonalGaussianPolicy(mean=[0.0], log_std=[0.0])
    rng = np.random.default_rng(3)
    thetas = sample(pol, rng, 4000)

    # constant returns annihilate exactly
    zero = risk_pg_neutral(RolloutBatch(thetas, np.full(4000, 5.0)), pol)
    np.testing.assert_array_equal(zero, np.zeros(2))

    # shift invariance is exact
    returns = thetas[:, 0]
    g1 = risk_pg_neutral(RolloutBatch(thetas, returns), pol)
    g2 = risk_pg_neutral(RolloutBatch(thetas, returns + 123.0), pol)
    np.testing.assert_allclose(g1, g2, atol=1e-11)


def test_risk_pg_neutral_linear_gaussian():
    pol = DiagonalGaussianPolicy(mean=[0.0], log_std=[0.0])
    rng = np.random.default_rng(4)
    grads = np.array([risk_pg_neutral(_batch(pol, rng, 10_000), pol) for _ in range(200)])
    se = grads.std(axis=0) / math.sqrt(len(grads))
    err = np.abs(grads.mean(axis=0) - np.array([1.0, 0.0]))
    assert np.all(err < 4 * se)


@pytest.mark.parametrize("gamma", [-1e-6, 1e-6])
def test_gamma_to_zero_limit_is_the_baselined_gradient(gamma):
    # On a batch whose empirical score mean vanishes, the risk gradient
    # converges to the mean-baselined neutral gradient as gamma -> 0.
    pol = DiagonalGaussianPolicy(mean=[1.0, -0.5], log_std=[0.0, math.log(0.5)])
    rng = np.random.default_rng(5)
    thetas = standardized_policy_batch(pol, rng, 1000)
    returns = np.sin(thetas[:, 0]) + thetas[:, 1] ** 2
    batch = RolloutBatch(thetas, returns)
    g_risk = risk_pg(batch, pol, gamma)
    g_neutral = risk_pg_neutral(batch, pol)
    rel = np.linalg.norm(g_risk - g_neutral) / np.linalg.norm(g_neutral)
    assert rel < 1e-3


def test_additive_baseline_same_expectation_lower_variance():
    pol = DiagonalGaussianPolicy(mean=[1.0], log_std=[0.0])
    rng = np.random.default_rng(6)
    raw, centered = [], []
    for _ in range(200):
        batch = _batch(pol, rng, 500, reward=lambda th: lin_toy_returns(th))
        raw.append(risk_pg(batch, pol, 1.0))
        centered.append(additive_baseline_pg(batch, pol, 1.0))
    raw, centered = np.array(raw), np.array(centered)
    joint_se = np.sqrt(raw.var(axis=0) + centered.var(axis=0)) / math.sqrt(len(raw))
    assert np.all(np.abs(raw.mean(axis=0) - centered.mean(axis=0)) < 4 * joint_se)
    assert centered.var(axis=0).sum() <= raw.var(axis=0).sum()


def test_additive_baseline_constant_returns_zero():
    pol = DiagonalGaussianPolicy(mean=[0.0], log_std=[0.0])
    thetas = sample(pol, np.random.default_rng(7), 100)
    grad = additive_baseline_pg(RolloutBatch(thetas, np.full(100, 3.0)), pol, 2.0)
    np.testing.assert_allclose(grad, np.zeros(2), atol=1e-13)


def test_natural_precondition_blocks():
    pol = DiagonalGaussianPolicy(mean=[0.0, 0.0], log_std=[0.0, 0.0])
    grad = np.array([1.0, -2.0, 4.0, 4.0])
    nat = natural_precondition(grad, pol)
    np.testing.assert_allclose(nat[:2], grad[:2])   # sigma = 1 leaves the mean block
    np.testing.assert_allclose(nat[2:], grad[2:] / 2.0)


def test_natural_gradient_reparameterization_invariance():
    # Exact gradient in (mean, log_std) vs (mean, sigma) coordinates: after
    # inverse-Fisher preconditioning both give the same direction.
    mu, sig, gamma = 0.7, 0.6, 1.0
    g_cov = exact_gradient_point(lin_toy_reward, mu, sig, gamma)
    nat_cov = g_cov / np.array([1.0 / sig**2, 2.0])
    # chain rule into sigma coordinates, Fisher there is diag(1/s^2, 2/s^2)
    g_sig = np.array([g_cov[0], g_cov[1] / sig])
    nat_sig = g_sig / np.array([1.0 / sig**2, 2.0 / sig**2])
    nat_sig_back = np.array([nat_sig[0], nat_sig[1] / sig])  # d log_std = d sigma / sigma
    cosine = nat_cov @ nat_sig_back / (np.linalg.norm(nat_cov) * np.linalg.norm(nat_sig_back))
    assert cosine >= 0.999


def test_estimate_gradient_dispatch():
    pol = DiagonalGaussianPolicy(mean=[0.0], log_std=[0.0])
    batch = _batch(pol, np.random.default_rng(8), 1000)
    neutral = estimate_gradient(batch, pol, AscentConfig(gamma=0.0))
    np.testing.assert_array_equal(neutral, risk_pg_neutral(batch, pol))
    risky = estimate_gradient(batch, pol, AscentConfig(gamma=0.5, additive_baseline=False))
    np.testing.assert_array_equal(risky, risk_pg(batch, pol, 0.5))


def test_ascend_zero_step_size_limit():
    # smallest representable positive step keeps the policy numerically fixed
    init = DiagonalGaussianPolicy(mean=[2.0], log_std=[0.0])
    cfg = AscentConfig(step_size=1e-300, iterations=5, samples_per_iter=50, seed=0)
    pairs = ascend(lambda th, rng: lin_toy_returns(th), init, cfg)
    final = pairs[-1][0]
    np.testing.assert_allclose(final.mean, init.mean, atol=1e-12)
    np.testing.assert_allclose(final.log_std, init.log_std, atol=1e-12)


def test_ascend_lin_toy_reaches_origin():
    init = DiagonalGaussianPolicy(mean=[2.0], log_std=[math.log(0.5)])
    cfg = AscentConfig(step_size=0.05, iterations=300, samples_per_iter=500,
                       gamma=0.0, seed=1)
    pairs = ascend(lambda th, rng: lin_toy_returns(th), init, cfg)
    assert abs(pairs[-1][0].mean[0]) < 0.2


def test_ascend_deterministic_records():
    init = DiagonalGaussianPolicy(mean=[1.0], log_std=[0.0])
    cfg = AscentConfig(step_size=0.05, iterations=10, samples_per_iter=100,
                       gamma=0.3, seed=11)
    runs = [ascend(lambda th, rng: lin_toy_returns(th), init, cfg) for _ in range(2)]
    for (pol_a, rec_a), (pol_b, rec_b) in zip(*runs):
        assert rec_a == rec_b
        np.testing.assert_array_equal(pol_a.mean, pol_b.mean)
        np.testing.assert_array_equal(pol_a.log_std, pol_b.log_std)


def test_ascend_aborts_on_non_finite_returns():
    init = DiagonalGaussianPolicy(mean=[0.0], log_std=[0.0])
    cfg = AscentConfig(step_size=0.05, iterations=3, samples_per_iter=10, seed=0)
    with pytest.raises(ValueError):
        ascend(lambda th, rng: np.full(len(th), np.nan), init, cfg)


def test_ascend_error_carries_iteration():
    err = AscentError(7, "boom")
    assert err.iteration == 7
    assert "7" in str(err)


def test_gradient_field_shapes_and_signs():
    mu_grid = np.linspace(-2.0, 2.0, 5)
    sig_grid = np.array([0.2, 1.0])
    field = gradient_field(lin_toy_reward, mu_grid, np.log(sig_grid), 1.0)
    assert field.shape == (5, 2, 2)
    assert np.all(field[:, :, 1] < 0)          # risk-averse shrinks exploration
    field_seek = gradient_field(lin_toy_reward, mu_grid, np.log(sig_grid), -1.0)
    assert np.any(field_seek[:, :, 1] > 0)     # risk-seeking may grow it
    field_neutral = gradient_field(lin_toy_reward, np.array([0.0]), np.log(sig_grid), 0.0)
    np.testing.assert_allclose(field_neutral[0, :, 0], 0.0, atol=1e-10)


def test_gradient_field_empty_grid_rejected():
    with pytest.raises(ValueError):
        gradient_field(lin_toy_reward, [], [0.0], 1.0)


def test_gradient_field_matches_closed_form_fd():
    # central differences of the error-function objective as the oracle
    h = 1e-6
    for mu, sig, gamma in [(1.0, 0.5, 1.0), (0.0, 1.0, -1.0), (-0.7, 1.4, 0.1)]:
        point = exact_gradient_point(lin_toy_reward, mu, sig, gamma)
        ls = math.log(sig)
        fd_mu = (lin_toy_objective_exact(mu + h, sig, gamma)
                 - lin_toy_objective_exact(mu - h, sig, gamma)) / (2 * h)
        fd_ls = (lin_toy_objective_exact(mu, math.exp(ls + h), gamma)
                 - lin_toy_objective_exact(mu, math.exp(ls - h), gamma)) / (2 * h)
        np.testing.assert_allclose(point, [fd_mu, fd_ls], rtol=1e-4, atol=1e-8)


@pytest.mark.filterwarnings("ignore::UserWarning", "ignore:.*subdivisions.*")
def test_quadrature_error_reports_grid_point():
    # an oscillatory reward defeats the quadrature budget and must raise
    with pytest.raises(QuadratureError):
        exact_gradient_point(lambda t: math.sin(1e7 * t), 0.0, 1.0, 1.0)
