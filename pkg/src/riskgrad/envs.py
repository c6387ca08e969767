"""Simulated evaluation environments.

Each environment exposes black-box return evaluation over sampled policy
parameters, plus exact oracles (return moments, landing positions, the 1-D
objective in closed form) where the problem structure allows them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

from .policies import ContextualLinearGaussianPolicy, rff_features, softmax_portfolio
from .risk import DEFAULT_GAMMA_ZERO_EPS, RiskConfig, certainty_equivalent_mc

GRAVITY = 9.81


# ---------------------------------------------------------------------------
# Portfolio: Gaussian asset returns, softmax-parameterized allocation.

@dataclass(frozen=True)
class PortfolioEnv:
    asset_means: np.ndarray
    asset_stds: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.asset_means, dtype=float).ravel()
        stds = np.asarray(self.asset_stds, dtype=float).ravel()
        if means.size != stds.size or means.size < 1:
            raise ValueError("asset_means and asset_stds must have equal nonzero length")
        if np.any(stds <= 0):
            raise ValueError("asset_stds must be positive")
        object.__setattr__(self, "asset_means", means)
        object.__setattr__(self, "asset_stds", stds)

    @property
    def num_assets(self) -> int:
        return self.asset_means.size


def make_paper_portfolio() -> PortfolioEnv:
    """30 assets with means spaced 4 -> 0.5 and stds spaced 2 -> 0.01.

    High expected return comes with high risk; the safest asset pays least.
    """
    return PortfolioEnv(asset_means=np.linspace(4.0, 0.5, 30),
                        asset_stds=np.linspace(2.0, 0.01, 30))


def _check_simplex(x: np.ndarray, tol: float = 1e-8):
    if abs(float(np.sum(x)) - 1.0) > tol or np.any(x < -tol):
        raise ValueError("portfolio vector must lie on the probability simplex")


def portfolio_return_dist(env: PortfolioEnv, x) -> tuple[float, float]:
    """Exact mean and variance of the return of portfolio x."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != env.num_assets:
        raise ValueError("portfolio dimension mismatch")
    _check_simplex(x)
    return float(env.asset_means @ x), float(env.asset_stds**2 @ x**2)


def portfolio_return_sample(env: PortfolioEnv, x, rng: np.random.Generator) -> float:
    mean, var = portfolio_return_dist(env, x)
    return float(mean + math.sqrt(var) * rng.standard_normal())


def portfolio_returns(env: PortfolioEnv, thetas: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    """Batch evaluation: softmax each parameter vector, draw one return each."""
    x = softmax_portfolio(np.atleast_2d(thetas))
    means = x @ env.asset_means
    stds = np.sqrt((x * x) @ env.asset_stds**2)
    return means + stds * rng.standard_normal(len(x))


def portfolio_mean_returns(env: PortfolioEnv, thetas: np.ndarray) -> np.ndarray:
    """Exact conditional mean return per parameter vector (no reward noise)."""
    x = softmax_portfolio(np.atleast_2d(thetas))
    return x @ env.asset_means


# ---------------------------------------------------------------------------
# Toy badminton: ballistic landing point under noisy hitting velocity.

@dataclass(frozen=True)
class BadmintonToyEnv:
    x0: float = 0.0
    y0: float = 0.0
    g: float = GRAVITY
    sigma_v0: float = 0.6
    x_des: float = 3.0

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("g must be positive")
        if self.sigma_v0 < 0:
            raise ValueError("sigma_v0 must be nonnegative")
        if self.y0 < 0:
            raise ValueError("y0 must be nonnegative")


def landing_x(env: BadmintonToyEnv, v0) -> float | np.ndarray:
    """Ballistic landing abscissa for initial velocity v0 = (vx, vy).

    Accepts one velocity (2,) or a batch (n, 2). The flight time is
    vy/g + sqrt(vy^2/g^2 + 2*y0/g); for y0 = 0 and vy < 0 it vanishes.
    """
    v0 = np.asarray(v0, dtype=float)
    vx, vy = v0[..., 0], v0[..., 1]
    t_flight = vy / env.g + np.sqrt((vy / env.g) ** 2 + 2.0 * env.y0 / env.g)
    x1 = env.x0 + vx * t_flight
    return float(x1) if x1.ndim == 0 else x1


def badminton_landing_batch(env: BadmintonToyEnv, us: np.ndarray,
                            rng: np.random.Generator) -> np.ndarray:
    """Landing positions for a batch of commanded velocities, with noise."""
    us = np.atleast_2d(np.asarray(us, dtype=float))
    v0 = us + env.sigma_v0 * rng.standard_normal(us.shape)
    return landing_x(env, v0)


def badminton_cost(env: BadmintonToyEnv, u, rng: np.random.Generator) -> float:
    """One noisy rollout cost C = |x_des - x1|; the return is R = -C."""
    x1 = badminton_landing_batch(env, np.asarray(u, dtype=float).reshape(1, 2), rng)
    return float(abs(env.x_des - x1[0]))


def badminton_returns(env: BadmintonToyEnv, us: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    return -np.abs(env.x_des - badminton_landing_batch(env, us, rng))


# ---------------------------------------------------------------------------
# 1-D toy problem: reward R(theta) = -|theta| and its exact objective.

@dataclass(frozen=True)
class LinToyEnv:
    """Stateless; the reward is -|theta|."""


def lin_toy_returns(thetas: np.ndarray) -> np.ndarray:
    return -np.abs(np.asarray(thetas, dtype=float)).ravel()


def lin_toy_reward(theta: float) -> float:
    return -abs(theta)


def _folded_mean(mu: float, sigma: float) -> float:
    # E|theta| for theta ~ N(mu, sigma^2)
    return (sigma * math.sqrt(2.0 / math.pi) * math.exp(-mu * mu / (2 * sigma * sigma))
            + mu * (1.0 - 2.0 * norm.cdf(-mu / sigma)))


def lin_toy_objective_exact(mu: float, sigma: float, gamma: float,
                            gamma_zero_epsilon: float = DEFAULT_GAMMA_ZERO_EPS) -> float:
    """Exact risk objective of the 1-D problem, -(1/g) log E[exp(g |theta|)].

    Evaluated through the Gaussian error function in log space:
    E[exp(g|theta|)] splits at zero into two tilted Gaussian tails. The
    neutral limit is minus the folded-normal mean.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if abs(gamma) < gamma_zero_epsilon:
        return -_folded_mean(mu, sigma)
    a = mu / sigma
    tilt = 0.5 * gamma * gamma * sigma * sigma
    log_z = tilt + np.logaddexp(gamma * mu + norm.logcdf(a + gamma * sigma),
                                -gamma * mu + norm.logcdf(-a + gamma * sigma))
    return float(-log_z / gamma)


def lin_toy_objective_quad(mu: float, sigma: float, gamma: float,
                           gamma_zero_epsilon: float = DEFAULT_GAMMA_ZERO_EPS) -> float:
    """Adaptive-quadrature evaluation of the same objective (independent route)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    half = (12.0 + abs(gamma) * sigma) * sigma
    lo, hi = mu - half, mu + half
    points = [0.0] if lo < 0.0 < hi else None

    def pdf(t):
        z = (t - mu) / sigma
        return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))

    if abs(gamma) < gamma_zero_epsilon:
        val, _ = quad(lambda t: -abs(t) * pdf(t), lo, hi, points=points, limit=200)
        return val
    shift = max(abs(gamma * lo), abs(gamma * hi))
    val, _ = quad(lambda t: math.exp(gamma * abs(t) - shift) * pdf(t),
                  lo, hi, points=points, limit=200)
    return float(-(math.log(val) + shift) / gamma)


# ---------------------------------------------------------------------------
# Contextual badminton: ballistic physics with the start position as context.

@dataclass(frozen=True)
class ContextualBadmintonEnv:
    x_lo: float = 0.0
    x_hi: float = 0.5
    y_lo: float = 0.0
    y_hi: float = 0.5
    g: float = GRAVITY
    sigma_v0: float = 0.6
    x_des: float = 3.0
    r_target: float = 1.0
    tolerance: float = 0.1

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise ValueError("context box must be non-degenerate")
        if self.y_lo < 0:
            raise ValueError("start heights must be nonnegative")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.r_target < 0:
            raise ValueError("r_target must be nonnegative")
        if not self.g > 0:
            raise ValueError("g must be positive")
        if self.sigma_v0 < 0:
            raise ValueError("sigma_v0 must be nonnegative")


def sample_contexts(env: ContextualBadmintonEnv, rng: np.random.Generator,
                    n: int) -> np.ndarray:
    lo = np.array([env.x_lo, env.y_lo])
    hi = np.array([env.x_hi, env.y_hi])
    return lo + (hi - lo) * rng.random((n, 2))


def contextual_landing(env: ContextualBadmintonEnv, contexts: np.ndarray,
                       v0: np.ndarray) -> np.ndarray:
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    x0, y0 = contexts[:, 0], contexts[:, 1]
    vx, vy = v0[:, 0], v0[:, 1]
    t_flight = vy / env.g + np.sqrt((vy / env.g) ** 2 + 2.0 * y0 / env.g)
    return x0 + vx * t_flight


def _check_context(env: ContextualBadmintonEnv, s: np.ndarray):
    if np.any(s[..., 0] < env.x_lo) or np.any(s[..., 0] > env.x_hi) \
            or np.any(s[..., 1] < env.y_lo) or np.any(s[..., 1] > env.y_hi):
        raise ValueError("context outside the environment box")


def contextual_returns(env: ContextualBadmintonEnv, contexts: np.ndarray,
                       thetas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Batch rewards -|x_des - x1| + r_target * 1[|x_des - x1| <= tolerance]."""
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    _check_context(env, contexts)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    v0 = thetas + env.sigma_v0 * rng.standard_normal(thetas.shape)
    err = np.abs(env.x_des - contextual_landing(env, contexts, v0))
    return -err + env.r_target * (err <= env.tolerance)


def contextual_return(env: ContextualBadmintonEnv, s, theta,
                      rng: np.random.Generator) -> float:
    s = np.asarray(s, dtype=float).reshape(1, 2)
    return float(contextual_returns(env, s, np.asarray(theta, dtype=float).reshape(1, 2),
                                    rng)[0])


def contextual_hit_rate(env: ContextualBadmintonEnv,
                        policy: ContextualLinearGaussianPolicy,
                        rng: np.random.Generator, n: int = 2000) -> float:
    """Fraction of contexts hit within tolerance at zero velocity noise."""
    contexts = sample_contexts(env, rng, n)
    u = policy.mean_action(contexts)
    err = np.abs(env.x_des - contextual_landing(env, contexts, u))
    return float(np.mean(err <= env.tolerance))


def contextual_objective_mc(policy: ContextualLinearGaussianPolicy,
                            env: ContextualBadmintonEnv, gamma: float, n: int,
                            rng: np.random.Generator) -> float:
    """Certainty equivalent over joint context and action noise.

    The risk transform wraps both integrals at once: contexts and parameters
    are sampled jointly and a single certainty equivalent is taken.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    contexts = sample_contexts(env, rng, n)
    feats = rff_features(contexts, policy.feature_map)
    thetas = feats @ policy.weights + policy.sigma * rng.standard_normal((n, policy.param_dim))
    returns = contextual_returns(env, contexts, thetas, rng)
    return certainty_equivalent_mc(returns, RiskConfig(gamma))


# ---------------------------------------------------------------------------
# Plain-text environment construction.

_ENV_NAMES = ("portfolio", "toy_badminton", "lin_toy", "contextual")


def parse_env_config(text: str):
    """Build an environment from 'key value' lines; first line names the env.

    Unspecified keys fall back to the defaults above (the portfolio defaults
    are the evenly spaced 30-asset set).
    """
    fields: dict[str, str] = {}
    name = None
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "env":
            name = rest.strip()
        else:
            fields[key] = rest.strip()
    if name not in _ENV_NAMES:
        raise ValueError(f"unknown env name {name!r}; expected one of {_ENV_NAMES}")

    def scalar(key, default):
        return float(fields[key]) if key in fields else default

    if name == "portfolio":
        if ("asset_means" in fields) != ("asset_stds" in fields):
            raise ValueError("asset_means and asset_stds must be given together")
        if "asset_means" in fields:
            return PortfolioEnv(asset_means=np.fromstring(fields["asset_means"], sep=" "),
                                asset_stds=np.fromstring(fields["asset_stds"], sep=" "))
        n = int(scalar("num_assets", 30))
        return PortfolioEnv(asset_means=np.linspace(4.0, 0.5, n),
                            asset_stds=np.linspace(2.0, 0.01, n))
    if name == "toy_badminton":
        return BadmintonToyEnv(x0=scalar("x0", 0.0), y0=scalar("y0", 0.0),
                               g=scalar("g", GRAVITY),
                               sigma_v0=scalar("sigma_v0", 0.6),
                               x_des=scalar("x_des", 3.0))
    if name == "lin_toy":
        return LinToyEnv()
    return ContextualBadmintonEnv(
        x_lo=scalar("x_lo", 0.0), x_hi=scalar("x_hi", 0.5),
        y_lo=scalar("y_lo", 0.0), y_hi=scalar("y_hi", 0.5),
        g=scalar("g", GRAVITY), sigma_v0=scalar("sigma_v0", 0.6),
        x_des=scalar("x_des", 3.0), r_target=scalar("r_target", 1.0),
        tolerance=scalar("tolerance", 0.1))


def load_env_config(path):
    with open(path, "r", encoding="ascii") as fh:
        return parse_env_config(fh.read())
