"""Per-iteration scalar summaries emitted by the optimizers and the harness."""
from __future__ import annotations

from dataclasses import dataclass, field

# Fixed CSV column order; extra keys follow, sorted by name.
CORE_COLUMNS = [
    "experiment", "algo", "gamma", "seed", "iter",
    "j_risk", "mean_return", "var_return",
    "policy_mean_norm", "policy_sigma_mean",
]


@dataclass
class IterationRecord:
    experiment: str
    algo: str
    gamma: float
    seed: int
    iter: int
    j_risk: float
    mean_return: float
    var_return: float
    policy_mean_norm: float
    policy_sigma_mean: float
    extra: dict = field(default_factory=dict)
