"""Shared test oracles and batch constructions, independent of the code under test."""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad


def quad_certainty_equivalent(mu: float, sigma: float, gamma: float) -> float:
    """Certainty equivalent of a Gaussian return by direct quadrature."""
    lo, hi = mu - 14 * sigma - abs(gamma) * sigma**2, mu + 14 * sigma + abs(gamma) * sigma**2

    def pdf(r):
        z = (r - mu) / sigma
        return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2 * math.pi))

    shift = max(-gamma * lo, -gamma * hi)
    val, _ = quad(lambda r: math.exp(-gamma * r - shift) * pdf(r), lo, hi, limit=200)
    return -(math.log(val) + shift) / gamma


def quad_density_mass(logpdf, lo: float, hi: float, n: int = 20001) -> float:
    """Trapezoid integral of exp(logpdf) on a fine grid."""
    xs = np.linspace(lo, hi, n)
    ys = np.exp([logpdf(x) for x in xs])
    return float(np.trapezoid(ys, xs))


def standardized_normal_batch(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Antithetic standard-normal draws with exact zero mean and unit variance
    per coordinate, so the empirical Gaussian score of the batch vanishes."""
    if n % 2:
        raise ValueError("n must be even")
    half = rng.standard_normal((n // 2, dim))
    z = np.concatenate([half, -half])
    return z / z.std(axis=0)


def standardized_policy_batch(policy, rng: np.random.Generator, n: int) -> np.ndarray:
    """Policy samples whose empirical score mean is exactly zero."""
    z = standardized_normal_batch(rng, n, policy.dim)
    return policy.mean + policy.sigma * z


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for j in range(x.size):
        hj = h * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += hj
        xm[j] -= hj
        out[j] = (f(xp) - f(xm)) / (2 * hj)
    return out
