"""Gaussian search distributions and their score machinery.

Plain diagonal Gaussians are parameterized in covariant (mean, log_std)
coordinates; contextual policies are linear in random Fourier features of the
context. Policies are immutable values: updates construct new instances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Floor applied to log_std during optimization updates so the score function
# never degenerates at zero variance.
LOG_STD_FLOOR = -20.0

_LOG_2PI = math.log(2.0 * math.pi)


def _vector(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float, copy=True).ravel()
    if arr.size < 1:
        raise ValueError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DiagonalGaussianPolicy:
    """N(mean, diag(exp(log_std)^2)) in covariant (mean, log_std) coordinates."""

    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _vector(self.mean, "mean"))
        object.__setattr__(self, "log_std", _vector(self.log_std, "log_std"))
        if self.mean.shape != self.log_std.shape:
            raise ValueError("mean and log_std must have equal dimension")

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_std)


def sample(policy: DiagonalGaussianPolicy, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw n parameter vectors, shape (n, dim). Deterministic given the stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = rng.standard_normal((n, policy.dim))
    return policy.mean + policy.sigma * z


def log_density(policy: DiagonalGaussianPolicy, theta) -> float:
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != policy.dim:
        raise ValueError("theta dimension does not match policy")
    z = (theta - policy.mean) / policy.sigma
    return float(-0.5 * np.dot(z, z) - np.sum(policy.log_std) - 0.5 * policy.dim * _LOG_2PI)


def score(policy: DiagonalGaussianPolicy, theta) -> np.ndarray:
    """Gradient of log pi(theta) w.r.t. (mean, log_std), concatenated length 2*dim.

    Per coordinate: d/d mean = (theta - mu) / sigma^2 and
    d/d log_std = ((theta - mu) / sigma)^2 - 1.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != policy.dim:
        raise ValueError("theta dimension does not match policy")
    z = (theta - policy.mean) / policy.sigma
    return np.concatenate([z / policy.sigma, z * z - 1.0])


def score_batch(policy: DiagonalGaussianPolicy, thetas: np.ndarray) -> np.ndarray:
    """Scores of a whole batch, shape (n, 2*dim)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[1] != policy.dim:
        raise ValueError("theta dimension does not match policy")
    z = (thetas - policy.mean) / policy.sigma
    return np.concatenate([z / policy.sigma, z * z - 1.0], axis=1)


def fisher_information(policy: DiagonalGaussianPolicy) -> np.ndarray:
    """Diagonal of the exact Fisher matrix in covariant coordinates.

    1/sigma^2 on the mean block and the constant 2 on the log_std block;
    returned as a length-2*dim vector of diagonal entries.
    """
    return np.concatenate([1.0 / policy.sigma**2, np.full(policy.dim, 2.0)])


def softmax_portfolio(theta) -> np.ndarray:
    """Max-shifted softmax; the result is strictly positive and sums to one."""
    theta = np.asarray(theta, dtype=float)
    e = np.exp(theta - np.max(theta, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class FourierFeatureMap:
    """Random sinusoidal features phi_k(s) = sin(freq_k . s / bandwidth + phase_k)."""

    frequencies: np.ndarray  # (n_features, context_dim)
    phases: np.ndarray       # (n_features,)
    bandwidth: float

    def __post_init__(self):
        freq = np.array(self.frequencies, dtype=float, copy=True)
        if freq.ndim != 2:
            raise ValueError("frequencies must be a 2-D matrix")
        freq.flags.writeable = False
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "phases", _vector(self.phases, "phases"))
        if self.phases.size != freq.shape[0]:
            raise ValueError("phases length must equal the number of features")
        if np.any(self.phases < 0.0) or np.any(self.phases >= 2.0 * math.pi):
            raise ValueError("phases must lie in [0, 2*pi)")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    @property
    def n_features(self) -> int:
        return self.frequencies.shape[0]

    @property
    def context_dim(self) -> int:
        return self.frequencies.shape[1]


def rff_features(s, fmap: FourierFeatureMap) -> np.ndarray:
    """Feature vector for one context (context_dim,) or batch (n, context_dim)."""
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != fmap.context_dim:
        raise ValueError("context dimension does not match the feature map")
    return np.sin(s @ fmap.frequencies.T / fmap.bandwidth + fmap.phases)


def median_bandwidth(pilot_contexts) -> float:
    """Median pairwise distance of a pilot context sample (standard heuristic)."""
    pts = np.atleast_2d(np.asarray(pilot_contexts, dtype=float))
    diffs = pts[:, None, :] - pts[None, :, :]
    dists = np.sqrt(np.sum(diffs * diffs, axis=-1))
    med = float(np.median(dists[np.triu_indices(len(pts), k=1)]))
    return med if med > 0 else 1.0


def random_fourier_map(context_dim: int, n_features: int, bandwidth: float,
                       rng: np.random.Generator, bias: bool = True) -> FourierFeatureMap:
    """Standard-Gaussian frequencies with uniform phases.

    With bias=True the first feature row is (zero frequency, phase pi/2),
    i.e. a constant 1, so the linear mean map can represent offsets.
    """
    freq = rng.standard_normal((n_features, context_dim))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=n_features)
    if bias:
        freq[0] = 0.0
        phases[0] = math.pi / 2.0
    return FourierFeatureMap(frequencies=freq, phases=phases, bandwidth=bandwidth)


@dataclass(frozen=True, eq=False)
class ContextualLinearGaussianPolicy:
    """N(weights^T phi(s), diag(exp(log_std)^2)) with phi a Fourier feature map."""

    weights: np.ndarray  # (n_features, param_dim)
    log_std: np.ndarray  # (param_dim,)
    feature_map: FourierFeatureMap

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True)
        if w.ndim != 2:
            raise ValueError("weights must be a 2-D matrix")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "log_std", _vector(self.log_std, "log_std"))
        if w.shape[1] != self.log_std.size:
            raise ValueError("weights column count must equal log_std dimension")
        if w.shape[0] != self.feature_map.n_features:
            raise ValueError("weights row count must equal the feature count")

    @property
    def param_dim(self) -> int:
        return self.log_std.size

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_std)

    def mean_action(self, s) -> np.ndarray:
        """Deterministic command weights^T phi(s); accepts a single context or a batch."""
        return rff_features(s, self.feature_map) @ self.weights


def contextual_sample(policy: ContextualLinearGaussianPolicy, s,
                      rng: np.random.Generator) -> np.ndarray:
    """One parameter draw per context; (param_dim,) for a single context."""
    m = policy.mean_action(s)
    return m + policy.sigma * rng.standard_normal(m.shape)


# ---------------------------------------------------------------------------
# Plain-text serialization so experiments can be resumed and inspected.

def _fmt_vals(arr) -> str:
    return " ".join(format(v, ".17g") for v in np.asarray(arr, dtype=float).ravel())


def policy_to_text(policy) -> str:
    if isinstance(policy, DiagonalGaussianPolicy):
        return "\n".join([
            "policy diagonal_gaussian",
            f"dim {policy.dim}",
            f"mean {_fmt_vals(policy.mean)}",
            f"log_std {_fmt_vals(policy.log_std)}",
        ]) + "\n"
    if isinstance(policy, ContextualLinearGaussianPolicy):
        fmap = policy.feature_map
        return "\n".join([
            "policy contextual_linear_gaussian",
            f"n_features {fmap.n_features}",
            f"context_dim {fmap.context_dim}",
            f"param_dim {policy.param_dim}",
            f"bandwidth {format(fmap.bandwidth, '.17g')}",
            f"log_std {_fmt_vals(policy.log_std)}",
            f"weights {_fmt_vals(policy.weights)}",
            f"frequencies {_fmt_vals(fmap.frequencies)}",
            f"phases {_fmt_vals(fmap.phases)}",
        ]) + "\n"
    raise TypeError(f"cannot serialize {type(policy).__name__}")


def policy_from_text(text: str):
    fields = {}
    kind = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        if key == "policy":
            kind = rest.strip()
        else:
            fields[key] = rest
    if kind == "diagonal_gaussian":
        mean = np.fromstring(fields["mean"], sep=" ")
        log_std = np.fromstring(fields["log_std"], sep=" ")
        if mean.size != int(fields["dim"]):
            raise ValueError("serialized dimension mismatch")
        return DiagonalGaussianPolicy(mean=mean, log_std=log_std)
    if kind == "contextual_linear_gaussian":
        nf = int(fields["n_features"])
        cd = int(fields["context_dim"])
        pd = int(fields["param_dim"])
        fmap = FourierFeatureMap(
            frequencies=np.fromstring(fields["frequencies"], sep=" ").reshape(nf, cd),
            phases=np.fromstring(fields["phases"], sep=" "),
            bandwidth=float(fields["bandwidth"]),
        )
        return ContextualLinearGaussianPolicy(
            weights=np.fromstring(fields["weights"], sep=" ").reshape(nf, pd),
            log_std=np.fromstring(fields["log_std"], sep=" "),
            feature_map=fmap,
        )
    raise ValueError(f"unrecognized policy header: {kind!r}")


def save_policy(policy, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(policy_to_text(policy))


def load_policy(path):
    with open(path, "r", encoding="ascii") as fh:
        return policy_from_text(fh.read())
