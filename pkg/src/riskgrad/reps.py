"""Relative Entropy Policy Search on episodic return batches.

One step reweights the sampled parameters by exp(R_i / eta), with the
temperature eta chosen by minimizing the convex dual of the KL-constrained
improvement problem, then refits the Gaussian by weighted moment matching.
The implied risk factor gamma = -1/eta is negative for every solution, so
the method is risk-seeking by construction.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .policies import DiagonalGaussianPolicy, sample, score_batch
from .risk import as_returns
from .gradients import RolloutBatch, risk_pg


@dataclass(frozen=True)
class RepsConfig:
    """KL bound, temperature search window, and refit floor."""

    epsilon: float = 0.5
    eta_min: float = 1e-6
    eta_max: float = 1e6
    dual_tol: float = 1e-8
    covariance_floor: float = 1e-12

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.eta_min < self.eta_max:
            raise ValueError("need 0 < eta_min < eta_max")
        if not self.dual_tol > 0:
            raise ValueError("dual_tol must be positive")
        if self.covariance_floor < 0:
            raise ValueError("covariance_floor must be nonnegative")


@dataclass
class RepsSolution:
    eta_star: float
    weights: np.ndarray
    refit_policy: DiagonalGaussianPolicy
    effective_kl: float
    dual_value: float
    clamped: bool = False


def dual(eta: float, returns, epsilon: float) -> float:
    """Dual objective g(eta) = eta*epsilon + eta*(LSE(R_i/eta) - log n)."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    r = as_returns(returns)
    return float(eta * epsilon + eta * (logsumexp(r / eta) - math.log(r.size)))


def solve_dual(returns, cfg: RepsConfig) -> float:
    """Minimize the dual over eta by golden-section search on log eta.

    g is convex in eta, hence unimodal in log eta, so bracketing converges to
    the unique minimizer; a boundary solution (e.g. constant returns, where
    the dual is affine with slope epsilon) clamps to the search window and is
    reported with a warning.
    """
    r = as_returns(returns)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(cfg.eta_min), math.log(cfg.eta_max)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = dual(math.exp(c), r, cfg.epsilon)
    fd = dual(math.exp(d), r, cfg.epsilon)
    while b - a > cfg.dual_tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = dual(math.exp(c), r, cfg.epsilon)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = dual(math.exp(d), r, cfg.epsilon)
    eta_star = math.exp(0.5 * (a + b))
    if _clamped(eta_star, cfg):
        warnings.warn("dual minimizer clamped at the temperature search bound",
                      RuntimeWarning, stacklevel=2)
    return eta_star


def _clamped(eta_star: float, cfg: RepsConfig) -> bool:
    lo, hi = math.log(cfg.eta_min), math.log(cfg.eta_max)
    t = math.log(eta_star)
    pad = 10.0 * cfg.dual_tol
    return t <= lo + pad or t >= hi - pad


def reps_weights(returns, eta: float) -> np.ndarray:
    """Normalized weights w_i proportional to exp(R_i / eta); sum(w) == 1."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    r = as_returns(returns)
    log_w = r / eta
    return np.exp(log_w - logsumexp(log_w))


def effective_kl(weights) -> float:
    """KL of the reweighted empirical measure from uniform, in nats."""
    w = np.asarray(weights, dtype=float).ravel()
    pos = w > 0
    return float(np.sum(w[pos] * np.log(w.size * w[pos])))


def weighted_ml_fit(params, weights, cfg: RepsConfig) -> DiagonalGaussianPolicy:
    """Weighted moment projection onto the diagonal Gaussian family.

    mean = sum w_i theta_i and per-coordinate variance floored at
    cfg.covariance_floor; weight collapse onto identical samples therefore
    lands on the floor and is reported with a warning.
    """
    thetas = np.atleast_2d(np.asarray(params, dtype=float))
    w = np.asarray(weights, dtype=float).ravel()
    if len(thetas) != w.size:
        raise ValueError("params and weights must have equal length")
    if len(thetas) < 2:
        raise ValueError("need at least 2 samples to refit")
    mean = w @ thetas
    var = w @ (thetas - mean) ** 2
    if np.any(var <= cfg.covariance_floor):
        warnings.warn("refit variance hit the covariance floor",
                      RuntimeWarning, stacklevel=2)
    var = np.maximum(var, cfg.covariance_floor)
    return DiagonalGaussianPolicy(mean=mean, log_std=0.5 * np.log(var))


def reps_step(q_policy: DiagonalGaussianPolicy, evaluate, cfg: RepsConfig,
              rng: np.random.Generator, n: int) -> RepsSolution:
    """One full iteration: sample from q, evaluate, solve the dual, refit."""
    thetas = sample(q_policy, rng, n)
    returns = np.asarray(evaluate(thetas, rng), dtype=float).ravel()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        eta_star = solve_dual(returns, cfg)
    w = reps_weights(returns, eta_star)
    return RepsSolution(
        eta_star=eta_star,
        weights=w,
        refit_policy=weighted_ml_fit(thetas, w, cfg),
        effective_kl=effective_kl(w),
        dual_value=dual(eta_star, returns, cfg.epsilon),
        clamped=_clamped(eta_star, cfg),
    )


def bridge_check(batch: RolloutBatch, policy: DiagonalGaussianPolicy, eta: float):
    """Compare the moment-projection gradient with risk_pg at gamma = -1/eta.

    Returns (gradient_reps, gradient_risk, cosine). The two are proportional
    by the factor eta, so the cosine is 1 up to rounding.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    r = batch.returns
    log_w = r / eta
    coeff = np.exp(log_w - logsumexp(log_w) + math.log(r.size))
    scores = score_batch(policy, batch.params)
    grad_reps = (scores * coeff[:, None]).mean(axis=0)
    grad_risk = risk_pg(batch, policy, -1.0 / eta)
    denom = float(np.linalg.norm(grad_reps) * np.linalg.norm(grad_risk))
    cosine = float(grad_reps @ grad_risk / denom) if denom > 0 else 1.0
    return grad_reps, grad_risk, cosine
