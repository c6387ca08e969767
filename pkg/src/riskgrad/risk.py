"""Entropic-risk numerics shared by every algorithm in the package.

Everything here derives from the exponential utility exp(-gamma * r): the
Monte-Carlo certainty equivalent, the log-partition baseline, and the
self-normalized exponential weights that appear in the gradient estimators.
All expectations are computed in shifted log-space so that batches with
|gamma * return| up to ~700 never overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

DEFAULT_GAMMA_ZERO_EPS = 1e-8


@dataclass(frozen=True)
class RiskConfig:
    """Risk-sensitivity factor gamma plus the threshold for the neutral branch.

    Positive gamma is risk-averse, negative is risk-seeking. Magnitudes below
    gamma_zero_epsilon are treated as exactly zero because the -1/gamma
    prefactor is numerically explosive near zero.
    """

    gamma: float
    gamma_zero_epsilon: float = DEFAULT_GAMMA_ZERO_EPS

    def __post_init__(self):
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")
        if not self.gamma_zero_epsilon > 0:
            raise ValueError("gamma_zero_epsilon must be positive")

    @property
    def neutral(self) -> bool:
        return abs(self.gamma) < self.gamma_zero_epsilon


def as_returns(values) -> np.ndarray:
    """Validate a sequence of scalar returns and convert it to a 1-D array."""
    r = np.asarray(values, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("returns must be non-empty")
    if not np.all(np.isfinite(r)):
        raise ValueError("returns must be finite")
    return r


def utility(r: float, gamma: float) -> float:
    """Exponential utility exp(-gamma * r).

    Raises OverflowError when the result exceeds the double range.
    """
    if not (math.isfinite(r) and math.isfinite(gamma)):
        raise ValueError("r and gamma must be finite")
    return math.exp(-gamma * r)


def certainty_equivalent_mc(values, cfg: RiskConfig) -> float:
    """Sample certainty equivalent -(1/g) * log mean(exp(-g * R_i)).

    Falls back to the arithmetic mean on the neutral branch. The log-sum-exp
    is max-shifted, so no intermediate exponential overflows.
    """
    r = as_returns(values)
    if cfg.neutral:
        return float(np.mean(r))
    g = cfg.gamma
    return float(-(logsumexp(-g * r) - math.log(r.size)) / g)


def certainty_equivalent_gaussian(mu: float, sigma: float, gamma: float) -> float:
    """Closed-form certainty equivalent mu - gamma * sigma^2 / 2 of a Gaussian return."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return mu - gamma * sigma * sigma / 2.0


def log_partition_estimate(values, cfg: RiskConfig) -> float:
    """Sample log-partition psi_gamma = -(1/g) * log E[exp(-g * R)].

    Numerically identical to certainty_equivalent_mc; kept as a separate name
    because psi serves as the multiplicative baseline inside gradient weights.
    """
    return certainty_equivalent_mc(values, cfg)


def exp_weights(values, cfg: RiskConfig) -> np.ndarray:
    """Self-normalized weights w_i = exp(-g * (R_i - psi_hat)), mean(w) == 1.

    psi_hat is the in-sample log-partition estimate, so the weights are
    computed directly as exp(-g*R_i - LSE(-g*R) + log N); this keeps every
    log-weight at or below log N and can never overflow.
    """
    r = as_returns(values)
    if cfg.neutral:
        raise ValueError("exp_weights requires |gamma| >= gamma_zero_epsilon; "
                         "the neutral path uses centered returns instead")
    g = cfg.gamma
    log_w = -g * r - logsumexp(-g * r) + math.log(r.size)
    return np.exp(log_w)
