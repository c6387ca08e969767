"""Risk-sensitive likelihood-ratio gradient estimators and the ascent loop.

The core estimator weights each score vector by
c_i = -(1/gamma) * exp(-gamma * (R_i - psi_hat)) with the in-sample
log-partition baseline psi_hat; its gamma -> 0 limit is the mean-baselined
risk-neutral estimator. Also provides exact Fisher preconditioning and a
quadrature gradient field for 1-D objectives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .policies import (
    LOG_STD_FLOOR,
    ContextualLinearGaussianPolicy,
    DiagonalGaussianPolicy,
    fisher_information,
    rff_features,
    sample,
    score_batch,
)
from .records import IterationRecord
from .risk import DEFAULT_GAMMA_ZERO_EPS, RiskConfig, certainty_equivalent_mc, exp_weights


@dataclass(frozen=True)
class RolloutBatch:
    """Paired parameter vectors (n, dim) and scalar returns (n,) from one round."""

    params: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        params = np.atleast_2d(np.asarray(self.params, dtype=float))
        returns = np.asarray(self.returns, dtype=float).ravel()
        if len(params) != returns.size:
            raise ValueError("params and returns must have equal length")
        if returns.size < 2:
            raise ValueError("a rollout batch needs at least 2 samples")
        if not (np.all(np.isfinite(params)) and np.all(np.isfinite(returns))):
            raise ValueError("rollout entries must be finite")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "returns", returns)

    @property
    def size(self) -> int:
        return self.returns.size


@dataclass
class AscentConfig:
    """Settings for the gradient-ascent loop."""

    step_size: float = 0.05
    iterations: int = 100
    samples_per_iter: int = 500
    use_natural: bool = False
    gamma: float = 0.0
    seed: int = 0
    step_decay: float = 0.999
    grad_clip: float = 1e3
    gamma_zero_epsilon: float = DEFAULT_GAMMA_ZERO_EPS
    # The centered-coefficient estimator has the same expectation as the bare
    # one but drops the mean(score)/gamma noise term, which otherwise swamps
    # the update for |gamma| near the neutral threshold.
    additive_baseline: bool = True

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.samples_per_iter < 2:
            raise ValueError("samples_per_iter must be >= 2")
        if not 0 < self.step_decay <= 1:
            raise ValueError("step_decay must be in (0, 1]")


class AscentError(RuntimeError):
    """Raised when an update produces a non-finite gradient."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


class QuadratureError(RuntimeError):
    """Raised when the exact gradient quadrature fails to converge."""


def risk_pg(batch: RolloutBatch, policy: DiagonalGaussianPolicy, gamma: float) -> np.ndarray:
    """Risk-sensitive gradient estimate: mean of score_i * c_i over the batch."""
    cfg = RiskConfig(gamma)
    if cfg.neutral:
        raise ValueError("|gamma| below threshold; use risk_pg_neutral")
    scores = score_batch(policy, batch.params)
    coeff = -exp_weights(batch.returns, cfg) / gamma
    return (scores * coeff[:, None]).mean(axis=0)


def risk_pg_neutral(batch: RolloutBatch, policy: DiagonalGaussianPolicy) -> np.ndarray:
    """Risk-neutral gradient with the batch-mean return baseline."""
    scores = score_batch(policy, batch.params)
    adv = batch.returns - batch.returns.mean()
    return (scores * adv[:, None]).mean(axis=0)


def additive_baseline_pg(batch: RolloutBatch, policy: DiagonalGaussianPolicy,
                         gamma: float) -> np.ndarray:
    """risk_pg with the batch mean of the coefficients subtracted; same
    expectation, lower variance."""
    cfg = RiskConfig(gamma)
    if cfg.neutral:
        raise ValueError("|gamma| below threshold; use risk_pg_neutral")
    scores = score_batch(policy, batch.params)
    coeff = -exp_weights(batch.returns, cfg) / gamma
    coeff = coeff - coeff.mean()
    return (scores * coeff[:, None]).mean(axis=0)


def natural_precondition(grad: np.ndarray, policy: DiagonalGaussianPolicy) -> np.ndarray:
    """Exact inverse-Fisher preconditioning (diagonal solve)."""
    grad = np.asarray(grad, dtype=float)
    if grad.size != 2 * policy.dim:
        raise ValueError("gradient dimension does not match policy")
    return grad / fisher_information(policy)


def estimate_gradient(batch: RolloutBatch, policy: DiagonalGaussianPolicy,
                      cfg: AscentConfig) -> np.ndarray:
    """Dispatch on |gamma|, then optionally precondition with the exact Fisher."""
    if abs(cfg.gamma) < cfg.gamma_zero_epsilon:
        grad = risk_pg_neutral(batch, policy)
    elif cfg.additive_baseline:
        grad = additive_baseline_pg(batch, policy, cfg.gamma)
    else:
        grad = risk_pg(batch, policy, cfg.gamma)
    if cfg.use_natural:
        grad = natural_precondition(grad, policy)
    return grad


def _clip_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def ascend(evaluate, init_policy: DiagonalGaussianPolicy, cfg: AscentConfig,
           *, experiment: str = "", algo: str = ""):
    """Run the sample / evaluate / estimate / update loop.

    evaluate(params, rng) must map an (n, dim) batch to an (n,) return array.
    Returns one (policy after update, record of the sampling iteration) pair
    per iteration; fully deterministic given cfg.seed.
    """
    rng = np.random.default_rng(cfg.seed)
    policy = init_policy
    risk_cfg = RiskConfig(cfg.gamma, cfg.gamma_zero_epsilon)
    alpha = cfg.step_size
    out = []
    for k in range(cfg.iterations):
        thetas = sample(policy, rng, cfg.samples_per_iter)
        returns = np.asarray(evaluate(thetas, rng), dtype=float).ravel()
        batch = RolloutBatch(thetas, returns)
        grad = estimate_gradient(batch, policy, cfg)
        if not np.all(np.isfinite(grad)):
            raise AscentError(k, "non-finite gradient")
        grad = _clip_norm(grad, cfg.grad_clip)
        d = policy.dim
        record = IterationRecord(
            experiment=experiment, algo=algo, gamma=cfg.gamma, seed=cfg.seed,
            iter=k,
            j_risk=certainty_equivalent_mc(returns, risk_cfg),
            mean_return=float(returns.mean()),
            var_return=float(returns.var()),
            policy_mean_norm=float(np.linalg.norm(policy.mean)),
            policy_sigma_mean=float(policy.sigma.mean()),
        )
        policy = DiagonalGaussianPolicy(
            mean=policy.mean + alpha * grad[:d],
            log_std=np.maximum(policy.log_std + alpha * grad[d:], LOG_STD_FLOOR),
        )
        alpha *= cfg.step_decay
        out.append((policy, record))
    return out


def contextual_score_blocks(policy: ContextualLinearGaussianPolicy,
                            feats: np.ndarray, thetas: np.ndarray):
    """Per-sample score blocks of the contextual policy.

    Returns (weight_block, log_std_block) with shapes (n, n_features, d) and
    (n, d); the weight block is the outer product phi(s) x residual/sigma^2.
    """
    z = (thetas - feats @ policy.weights) / policy.sigma
    w_block = feats[:, :, None] * (z / policy.sigma)[:, None, :]
    return w_block, z * z - 1.0


def ascend_contextual(draw_contexts, evaluate, init_policy: ContextualLinearGaussianPolicy,
                      cfg: AscentConfig, *, experiment: str = "", algo: str = ""):
    """Ascent loop for the contextual linear-Gaussian policy.

    draw_contexts(rng, n) yields an (n, context_dim) batch and
    evaluate(contexts, params, rng) the matching returns. Natural
    preconditioning is not supported for the contextual parameterization.
    """
    if cfg.use_natural:
        raise ValueError("natural preconditioning supports plain Gaussian policies only")
    rng = np.random.default_rng(cfg.seed)
    policy = init_policy
    risk_cfg = RiskConfig(cfg.gamma, cfg.gamma_zero_epsilon)
    alpha = cfg.step_size
    out = []
    for k in range(cfg.iterations):
        contexts = draw_contexts(rng, cfg.samples_per_iter)
        feats = rff_features(contexts, policy.feature_map)
        thetas = feats @ policy.weights + policy.sigma * rng.standard_normal(
            (cfg.samples_per_iter, policy.param_dim))
        returns = np.asarray(evaluate(contexts, thetas, rng), dtype=float).ravel()
        if abs(cfg.gamma) < cfg.gamma_zero_epsilon:
            coeff = returns - returns.mean()
        else:
            coeff = -exp_weights(returns, risk_cfg) / cfg.gamma
            if cfg.additive_baseline:
                coeff = coeff - coeff.mean()
        w_block, ls_block = contextual_score_blocks(policy, feats, thetas)
        grad_w = (w_block * coeff[:, None, None]).mean(axis=0)
        grad_ls = (ls_block * coeff[:, None]).mean(axis=0)
        if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_ls))):
            raise AscentError(k, "non-finite gradient")
        norm = math.hypot(float(np.linalg.norm(grad_w)), float(np.linalg.norm(grad_ls)))
        if norm > cfg.grad_clip:
            grad_w *= cfg.grad_clip / norm
            grad_ls *= cfg.grad_clip / norm
        record = IterationRecord(
            experiment=experiment, algo=algo, gamma=cfg.gamma, seed=cfg.seed,
            iter=k,
            j_risk=certainty_equivalent_mc(returns, risk_cfg),
            mean_return=float(returns.mean()),
            var_return=float(returns.var()),
            policy_mean_norm=float(np.linalg.norm(policy.weights)),
            policy_sigma_mean=float(policy.sigma.mean()),
        )
        policy = ContextualLinearGaussianPolicy(
            weights=policy.weights + alpha * grad_w,
            log_std=np.maximum(policy.log_std + alpha * grad_ls, LOG_STD_FLOOR),
            feature_map=policy.feature_map,
        )
        alpha *= cfg.step_decay
        out.append((policy, record))
    return out


# ---------------------------------------------------------------------------
# Exact (quadrature) gradients of the 1-D objective, used for gradient fields.

def _gaussian_pdf(theta, mu, sigma):
    z = (theta - mu) / sigma
    return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


def _quad_checked(fn, lo, hi, points, rtol, atol, scale, where):
    val, err = quad(fn, lo, hi, points=points, limit=200)
    if err > max(atol, rtol * max(abs(val), scale)):
        raise QuadratureError(f"quadrature did not converge at {where} "
                              f"(value {val:.3e}, error {err:.3e})")
    return val


def exact_gradient_point(reward, mu: float, sigma: float, gamma: float,
                         *, gamma_zero_epsilon: float = DEFAULT_GAMMA_ZERO_EPS,
                         singular_points=(0.0,), rtol: float = 1e-7,
                         atol: float = 1e-8) -> np.ndarray:
    """Exact gradient of the 1-D risk objective at one (mu, log sigma) point.

    Differentiates under the integral: each component is the utility-weighted
    expectation of the corresponding score factor, normalized by the utility
    mass. The log-integrand is peak-shifted so large |gamma| tilts cannot
    overflow; the shift cancels in the ratio.
    """
    half = (12.0 + abs(gamma) * sigma) * sigma
    lo, hi = mu - half, mu + half
    points = sorted(p for p in singular_points if lo < p < hi)
    where = f"(mu={mu:g}, sigma={sigma:g}, gamma={gamma:g})"

    def s_mean(t):
        return (t - mu) / sigma**2

    def s_logstd(t):
        return ((t - mu) / sigma) ** 2 - 1.0

    if abs(gamma) < gamma_zero_epsilon:
        # Bound on E[|R * score|] for the error scale of near-zero components.
        r_scale = abs(reward(mu)) + abs(reward(mu + 3 * sigma)) + abs(reward(mu - 3 * sigma))
        g_mu = _quad_checked(lambda t: reward(t) * s_mean(t) * _gaussian_pdf(t, mu, sigma),
                             lo, hi, points, rtol, atol, r_scale / sigma, where)
        g_ls = _quad_checked(lambda t: reward(t) * s_logstd(t) * _gaussian_pdf(t, mu, sigma),
                             lo, hi, points, rtol, atol, r_scale, where)
        return np.array([g_mu, g_ls])

    log_norm = -math.log(sigma) - 0.5 * math.log(2.0 * math.pi)

    def log_integrand(t):
        z = (t - mu) / sigma
        return -gamma * reward(t) - 0.5 * z * z + log_norm

    probes = np.linspace(lo, hi, 513)
    if points:
        probes = np.concatenate([probes, points])
    shift = max(log_integrand(float(t)) for t in probes)

    def tilt(t):
        return math.exp(log_integrand(t) - shift)

    mass = _quad_checked(tilt, lo, hi, points, rtol, atol, 0.0, where)
    if not (math.isfinite(mass) and mass > 0):
        raise QuadratureError(f"degenerate utility mass at {where}")
    num_mu = _quad_checked(lambda t: tilt(t) * s_mean(t), lo, hi, points,
                           rtol, atol, mass / sigma, where)
    num_ls = _quad_checked(lambda t: tilt(t) * s_logstd(t), lo, hi, points,
                           rtol, atol, mass, where)
    return np.array([-num_mu / (gamma * mass), -num_ls / (gamma * mass)])


def gradient_field(reward, mu_grid, log_sigma_grid, gamma: float,
                   **kwargs) -> np.ndarray:
    """Exact gradient of the 1-D objective on a (mu, log sigma) grid.

    Returns an array of shape (len(mu_grid), len(log_sigma_grid), 2) holding
    the (d/d mean, d/d log_std) components in covariant coordinates.
    """
    mu_grid = np.asarray(mu_grid, dtype=float).ravel()
    log_sigma_grid = np.asarray(log_sigma_grid, dtype=float).ravel()
    if mu_grid.size == 0 or log_sigma_grid.size == 0:
        raise ValueError("grid must be non-empty")
    out = np.empty((mu_grid.size, log_sigma_grid.size, 2))
    for i, mu in enumerate(mu_grid):
        for j, ls in enumerate(log_sigma_grid):
            out[i, j] = exact_gradient_point(reward, float(mu), math.exp(ls), gamma, **kwargs)
    return out
