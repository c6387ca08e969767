"""Risk-sensitive episodic policy search under the entropic risk measure."""

from .risk import (
    RiskConfig,
    certainty_equivalent_gaussian,
    certainty_equivalent_mc,
    exp_weights,
    log_partition_estimate,
    utility,
)
from .policies import (
    ContextualLinearGaussianPolicy,
    DiagonalGaussianPolicy,
    FourierFeatureMap,
    contextual_sample,
    fisher_information,
    load_policy,
    log_density,
    median_bandwidth,
    random_fourier_map,
    rff_features,
    sample,
    save_policy,
    score,
    softmax_portfolio,
)
from .gradients import (
    AscentConfig,
    AscentError,
    QuadratureError,
    RolloutBatch,
    additive_baseline_pg,
    ascend,
    ascend_contextual,
    gradient_field,
    natural_precondition,
    risk_pg,
    risk_pg_neutral,
)
from .reps import (
    RepsConfig,
    RepsSolution,
    bridge_check,
    dual,
    effective_kl,
    reps_step,
    reps_weights,
    solve_dual,
    weighted_ml_fit,
)
from .envs import (
    BadmintonToyEnv,
    ContextualBadmintonEnv,
    LinToyEnv,
    PortfolioEnv,
    badminton_cost,
    contextual_objective_mc,
    contextual_return,
    landing_x,
    lin_toy_objective_exact,
    make_paper_portfolio,
    parse_env_config,
    portfolio_return_dist,
    portfolio_return_sample,
)
from .records import IterationRecord
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    emit_csv,
    repro_fig,
    reward_histogram,
    run_experiment,
)

__version__ = "0.1.0"
