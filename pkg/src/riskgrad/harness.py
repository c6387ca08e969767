"""Experiment orchestration: seeded sweep cells, CSV emission, and the
canned desk-scale reproductions behind the `repro` command."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .envs import (
    BadmintonToyEnv,
    ContextualBadmintonEnv,
    LinToyEnv,
    badminton_landing_batch,
    badminton_returns,
    contextual_hit_rate,
    contextual_returns,
    lin_toy_objective_exact,
    lin_toy_returns,
    lin_toy_reward,
    make_paper_portfolio,
    portfolio_mean_returns,
    portfolio_returns,
    sample_contexts,
)
from .gradients import AscentConfig, ascend, ascend_contextual, gradient_field
from .policies import (
    ContextualLinearGaussianPolicy,
    DiagonalGaussianPolicy,
    median_bandwidth,
    random_fourier_map,
    sample,
)
from .records import CORE_COLUMNS, IterationRecord
from .reps import RepsConfig, reps_step
from .risk import RiskConfig, certainty_equivalent_mc

EXPERIMENTS = ("portfolio", "toy_badminton", "lin_toy", "contextual", "gradfield")
ALGOS = ("pg", "npg", "reps")

# Default grid for gradient fields: mu in [-2, 2], sigma in [0.1, 2].
FIG2_MU_GRID = np.linspace(-2.0, 2.0, 21)
FIG2_SIGMA_GRID = np.linspace(0.1, 2.0, 21)
FIG2_GAMMAS = (0.0, 1.0, -1.0)

FIG3_GAMMAS = (0.1, 1.0, 5.0, 10.0)
FIG4_GAMMAS = tuple(g for mag in (0.01, 0.1, 1.0, 5.0, 10.0, 100.0, 1000.0)
                    for g in (mag, -mag))

# Histogram defaults for the portfolio return distributions.
HIST_BINS = 60
HIST_RANGE = (-4.0, 10.0)

_MASK64 = (1 << 64) - 1
_FINAL_EVAL_STREAM = 1 << 20  # base-seed offsets keep evaluation streams off the training streams
_DIAG_BATCH = 4000  # fresh-batch size for the final trend diagnostics


@dataclass
class ExperimentConfig:
    experiment: str
    algo: str = "pg"
    gamma_list: tuple = (0.0,)
    seeds: int = 1
    samples_per_iter: int = 500
    iterations: int = 100
    step_size: float = 0.05
    epsilon: float = 0.5
    output_path: str = ""
    base_seed: int = 0
    step_decay: float | None = None  # per-experiment default when unset
    use_natural: bool = False
    scale_step_by_gamma: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algo {self.algo!r}")
        self.gamma_list = tuple(float(g) for g in self.gamma_list)
        if len(self.gamma_list) == 0:
            raise ValueError("gamma_list must be non-empty")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.samples_per_iter < 2:
            raise ValueError("samples_per_iter must be >= 2")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.algo == "reps" and not self.epsilon > 0:
            raise ValueError("epsilon must be positive for reps")
        if self.algo == "npg":
            self.use_natural = True
        if self.experiment == "contextual" and self.algo in ("npg", "reps"):
            raise ValueError("the contextual experiment supports algo 'pg' only")
        if self.step_decay is None:
            # the contextual map needs stronger annealing to settle in place
            self.step_decay = 0.99 if self.experiment == "contextual" else 0.999
        if not 0 < self.step_decay <= 1:
            raise ValueError("step_decay must be in (0, 1]")


@dataclass
class CellFailure:
    gamma: float
    seed: int
    message: str


@dataclass
class ExperimentResult:
    records: list
    failures: list = field(default_factory=list)
    final_policies: dict = field(default_factory=dict)  # (gamma, seed) -> policy


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def cell_seed(base_seed: int, cell_index: int) -> int:
    """Derived stream seed; appending gamma values never perturbs earlier cells."""
    return splitmix64(splitmix64(base_seed & _MASK64) + cell_index)


def _worker_count(n_cells: int) -> int:
    raw = os.environ.get("RISKGRAD_THREADS", "0").strip() or "0"
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"RISKGRAD_THREADS must be an integer, got {raw!r}") from exc
    if cap < 0:
        raise ValueError("RISKGRAD_THREADS must be >= 0")
    if cap == 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_cells))


def _cell_step_size(cfg: ExperimentConfig, gamma: float) -> float:
    # Once the exponential weights saturate (|gamma| * return spread >> 1)
    # the coefficient scale drops like 1/|gamma|; rescaling the step keeps
    # the per-iteration motion comparable across the gamma sweep without
    # changing fixed points or directions. The /10 knee is where saturation
    # sets in for return spreads of order one.
    if cfg.scale_step_by_gamma:
        return cfg.step_size * max(1.0, abs(gamma) / 10.0)
    return cfg.step_size


def _init_policy(experiment: str, env) -> DiagonalGaussianPolicy:
    if experiment == "portfolio":
        n = env.num_assets
        return DiagonalGaussianPolicy(mean=np.zeros(n), log_std=np.zeros(n))
    if experiment == "toy_badminton":
        return DiagonalGaussianPolicy(mean=np.array([3.0, 3.0]), log_std=np.zeros(2))
    return DiagonalGaussianPolicy(mean=np.array([2.0]), log_std=np.array([math.log(0.5)]))


def _make_env(experiment: str):
    if experiment == "portfolio":
        return make_paper_portfolio()
    if experiment == "toy_badminton":
        return BadmintonToyEnv()
    if experiment == "contextual":
        return ContextualBadmintonEnv()
    return LinToyEnv()


def _make_evaluator(experiment: str, env):
    if experiment == "portfolio":
        return lambda thetas, rng: portfolio_returns(env, thetas, rng)
    if experiment == "toy_badminton":
        return lambda thetas, rng: badminton_returns(env, thetas, rng)
    return lambda thetas, rng: lin_toy_returns(thetas)


def _final_eval_record(cfg: ExperimentConfig, experiment: str, env, policy,
                       gamma: float, seed_idx: int, rng) -> IterationRecord:
    n = cfg.samples_per_iter
    extra = {"final_eval": 1.0}
    thetas = sample(policy, rng, n)
    if experiment == "toy_badminton":
        x1 = badminton_landing_batch(env, thetas, rng)
        returns = -np.abs(env.x_des - x1)
        # trend diagnostics on a larger fresh batch to tame the median noise
        x1_diag = badminton_landing_batch(env, sample(policy, rng, _DIAG_BATCH), rng)
        err = env.x_des - x1_diag
        extra.update(err_mean=float(err.mean()), x1_var=float(x1_diag.var()),
                     cost_mean=float(np.abs(err).mean()),
                     speed=float(np.linalg.norm(policy.mean)))
    elif experiment == "portfolio":
        returns = portfolio_returns(env, thetas, rng)
        extra["mean_return_exact"] = float(portfolio_mean_returns(env, thetas).mean())
    else:
        returns = lin_toy_returns(thetas)
    return IterationRecord(
        experiment=experiment, algo=cfg.algo, gamma=gamma, seed=seed_idx,
        iter=cfg.iterations,
        j_risk=certainty_equivalent_mc(returns, RiskConfig(gamma)),
        mean_return=float(np.mean(returns)),
        var_return=float(np.var(returns)),
        policy_mean_norm=float(np.linalg.norm(policy.mean)),
        policy_sigma_mean=float(policy.sigma.mean()),
        extra=extra,
    )


def _run_reps_cell(cfg: ExperimentConfig, env, evaluate, init_policy, gamma: float,
                   seed_idx: int, rng):
    reps_cfg = RepsConfig(epsilon=cfg.epsilon)
    risk_cfg = RiskConfig(gamma)
    policy = init_policy
    records = []
    captured = {}

    def capturing(thetas, inner_rng):
        returns = evaluate(thetas, inner_rng)
        captured["returns"] = returns
        return returns

    for k in range(cfg.iterations):
        sol = reps_step(policy, capturing, reps_cfg, rng, cfg.samples_per_iter)
        returns = captured["returns"]
        records.append(IterationRecord(
            experiment=cfg.experiment, algo="reps", gamma=gamma, seed=seed_idx,
            iter=k,
            j_risk=certainty_equivalent_mc(returns, risk_cfg),
            mean_return=float(np.mean(returns)),
            var_return=float(np.var(returns)),
            policy_mean_norm=float(np.linalg.norm(policy.mean)),
            policy_sigma_mean=float(policy.sigma.mean()),
            extra={"eta_star": sol.eta_star,
                   "implied_gamma": -1.0 / sol.eta_star,
                   "effective_kl": sol.effective_kl,
                   "dual_clamped": float(sol.clamped)},
        ))
        policy = sol.refit_policy
    return records, policy


def _contextual_init(env: ContextualBadmintonEnv, rng) -> ContextualLinearGaussianPolicy:
    pilot = sample_contexts(env, rng, 200)
    fmap = random_fourier_map(context_dim=2, n_features=100,
                              bandwidth=median_bandwidth(pilot), rng=rng, bias=True)
    # Start from a plausible constant serve command via the bias feature.
    weights = np.zeros((fmap.n_features, 2))
    weights[0] = (3.0, 3.0)
    return ContextualLinearGaussianPolicy(weights=weights,
                                          log_std=np.full(2, math.log(0.5)),
                                          feature_map=fmap)


def _run_contextual_cell(cfg: ExperimentConfig, env, gamma: float, seed_idx: int,
                         stream_seed: int):
    rng = np.random.default_rng(stream_seed)
    policy = _contextual_init(env, rng)
    acfg = AscentConfig(step_size=_cell_step_size(cfg, gamma), iterations=cfg.iterations,
                        samples_per_iter=cfg.samples_per_iter, gamma=gamma,
                        seed=stream_seed, step_decay=cfg.step_decay)
    pairs = ascend_contextual(
        lambda r, n: sample_contexts(env, r, n),
        lambda ctx, thetas, r: contextual_returns(env, ctx, thetas, r),
        policy, acfg, experiment=cfg.experiment, algo=cfg.algo)
    records = [rec for _, rec in pairs]
    final = pairs[-1][0]
    for rec in records:
        rec.seed = seed_idx
    contexts = sample_contexts(env, rng, cfg.samples_per_iter)
    thetas = final.mean_action(contexts) + final.sigma * rng.standard_normal(
        (cfg.samples_per_iter, 2))
    returns = contextual_returns(env, contexts, thetas, rng)
    records.append(IterationRecord(
        experiment=cfg.experiment, algo=cfg.algo, gamma=gamma, seed=seed_idx,
        iter=cfg.iterations,
        j_risk=certainty_equivalent_mc(returns, RiskConfig(gamma)),
        mean_return=float(np.mean(returns)),
        var_return=float(np.var(returns)),
        policy_mean_norm=float(np.linalg.norm(final.weights)),
        policy_sigma_mean=float(final.sigma.mean()),
        extra={"final_eval": 1.0,
               "hit_rate": contextual_hit_rate(env, final, rng)},
    ))
    return records, final


def _run_cell(cfg: ExperimentConfig, gamma: float, gamma_idx: int, seed_idx: int):
    stream_seed = cell_seed(cfg.base_seed, gamma_idx * cfg.seeds + seed_idx)
    env = _make_env(cfg.experiment)
    if cfg.experiment == "contextual":
        return _run_contextual_cell(cfg, env, gamma, seed_idx, stream_seed)

    evaluate = _make_evaluator(cfg.experiment, env)
    init_policy = _init_policy(cfg.experiment, env)
    rng = np.random.default_rng(stream_seed)
    if cfg.algo == "reps":
        records, final = _run_reps_cell(cfg, env, evaluate, init_policy, gamma,
                                        seed_idx, rng)
    else:
        acfg = AscentConfig(step_size=_cell_step_size(cfg, gamma),
                            iterations=cfg.iterations,
                            samples_per_iter=cfg.samples_per_iter,
                            use_natural=cfg.use_natural, gamma=gamma,
                            seed=stream_seed, step_decay=cfg.step_decay)
        pairs = ascend(evaluate, init_policy, acfg,
                       experiment=cfg.experiment, algo=cfg.algo)
        records = [rec for _, rec in pairs]
        for rec in records:
            rec.seed = seed_idx
        final = pairs[-1][0]
        rng = np.random.default_rng(cell_seed(cfg.base_seed + _FINAL_EVAL_STREAM,
                                              gamma_idx * cfg.seeds + seed_idx))
    records.append(_final_eval_record(cfg, cfg.experiment, env, final, gamma,
                                      seed_idx, rng))
    return records, final


def _run_gradfield(cfg: ExperimentConfig) -> ExperimentResult:
    records = []
    for gamma in cfg.gamma_list:
        records.extend(gradient_field_records(gamma))
    return ExperimentResult(records=records)


def gradient_field_records(gamma: float, mu_grid=None, sigma_grid=None) -> list:
    """Exact gradient field of the 1-D toy objective as flat records.

    Grid coordinates and gradient components travel in the extra columns."""
    mu_grid = FIG2_MU_GRID if mu_grid is None else np.asarray(mu_grid, dtype=float)
    sigma_grid = FIG2_SIGMA_GRID if sigma_grid is None else np.asarray(sigma_grid, dtype=float)
    field_vals = gradient_field(lin_toy_reward, mu_grid, np.log(sigma_grid), gamma)
    records = []
    for i, mu in enumerate(mu_grid):
        for j, sig in enumerate(sigma_grid):
            records.append(IterationRecord(
                experiment="gradfield", algo="exact", gamma=gamma, seed=0,
                iter=i * len(sigma_grid) + j,
                j_risk=lin_toy_objective_exact(float(mu), float(sig), gamma),
                mean_return=0.0, var_return=0.0,
                policy_mean_norm=abs(float(mu)), policy_sigma_mean=float(sig),
                extra={"mu": float(mu), "sigma": float(sig),
                       "dj_dmean": float(field_vals[i, j, 0]),
                       "dj_dlog_std": float(field_vals[i, j, 1])},
            ))
    return records


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every (gamma, seed) cell; records come back in deterministic
    (gamma, seed, iter) order regardless of the worker count."""
    if cfg.experiment == "gradfield":
        return _run_gradfield(cfg)
    cells = [(gi, si) for gi in range(len(cfg.gamma_list)) for si in range(cfg.seeds)]
    workers = _worker_count(len(cells))

    def one(cell):
        gi, si = cell
        gamma = cfg.gamma_list[gi]
        try:
            recs, policy = _run_cell(cfg, gamma, gi, si)
            return cell, recs, policy, None
        except Exception as exc:  # noqa: BLE001 - sibling cells must survive
            return cell, None, None, f"{type(exc).__name__}: {exc}"

    if workers == 1:
        outcomes = [one(cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, cells))

    result = ExperimentResult(records=[])
    for (gi, si), recs, policy, err in sorted(outcomes, key=lambda o: o[0]):
        gamma = cfg.gamma_list[gi]
        if err is not None:
            result.failures.append(CellFailure(gamma=gamma, seed=si, message=err))
            continue
        result.records.extend(recs)
        result.final_policies[(gamma, si)] = policy
    return result


# ---------------------------------------------------------------------------
# Statistics and CSV emission.

def reward_histogram(returns, bins: int, value_range: tuple[float, float]):
    """Fixed-width histogram; out-of-range samples land in the end bins."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo, hi = float(value_range[0]), float(value_range[1])
    if not lo < hi:
        raise ValueError("need lo < hi")
    r = np.asarray(returns, dtype=float).ravel()
    width = (hi - lo) / bins
    idx = np.clip(np.floor((r - lo) / width).astype(int), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    centers = lo + width * (np.arange(bins) + 0.5)
    return list(zip(centers.tolist(), counts.tolist()))


def _fmt_real(x) -> str:
    return format(float(x), ".17g")


def emit_csv(records, path) -> None:
    """Write records with the fixed column order and 17-significant-digit reals."""
    extra_keys = sorted({k for r in records for k in r.extra})
    lines = [",".join(CORE_COLUMNS + extra_keys)]
    for r in records:
        row = [r.experiment, r.algo, _fmt_real(r.gamma), str(int(r.seed)),
               str(int(r.iter)), _fmt_real(r.j_risk), _fmt_real(r.mean_return),
               _fmt_real(r.var_return), _fmt_real(r.policy_mean_norm),
               _fmt_real(r.policy_sigma_mean)]
        row.extend(_fmt_real(r.extra[k]) if k in r.extra else "" for k in extra_keys)
        lines.append(",".join(row))
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"failed to write CSV to {path}: {exc}") from exc


def write_histogram_csv(hist, path) -> None:
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("bin_center,count\n")
            for center, count in hist:
                fh.write(f"{_fmt_real(center)},{int(count)}\n")
    except OSError as exc:
        raise OSError(f"failed to write histogram to {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Desk-scale reproductions.

FIG3_CONFIG = dict(experiment="portfolio", algo="pg", gamma_list=FIG3_GAMMAS,
                   seeds=10, samples_per_iter=1000, iterations=300,
                   step_size=0.05, base_seed=90210)
FIG4_CONFIG = dict(experiment="toy_badminton", algo="pg", gamma_list=FIG4_GAMMAS,
                   seeds=10, samples_per_iter=1000, iterations=2000,
                   step_size=0.05, base_seed=31415, scale_step_by_gamma=True)


def _fig_gamma_tag(gamma: float) -> str:
    return format(gamma, "g").replace("-", "m").replace(".", "p")


def final_return_samples(cfg: ExperimentConfig, result: ExperimentResult,
                         gamma: float, n_per_seed: int = 1000) -> np.ndarray:
    """Fresh pooled returns of the final policies of one gamma column."""
    env = _make_env(cfg.experiment)
    evaluate = _make_evaluator(cfg.experiment, env)
    gi = cfg.gamma_list.index(gamma)
    pooled = []
    for si in range(cfg.seeds):
        policy = result.final_policies[(gamma, si)]
        rng = np.random.default_rng(cell_seed(cfg.base_seed + 2 * _FINAL_EVAL_STREAM,
                                              gi * cfg.seeds + si))
        pooled.append(evaluate(sample(policy, rng, n_per_seed), rng))
    return np.concatenate(pooled)


def repro_fig(name: str, out_dir=None, *, render_figures: bool = True):
    """Regenerate one of the canned experiment datasets.

    Returns (records, written paths); with out_dir=None nothing is written.
    """
    if name not in ("fig2", "fig3", "fig4"):
        raise ValueError(f"unknown repro target {name!r}")
    paths = []
    if name == "fig2":
        records = []
        fields = {}
        for gamma in FIG2_GAMMAS:
            recs = gradient_field_records(gamma)
            records.extend(recs)
            fields[gamma] = recs
        if out_dir is not None:
            paths.append(_write_repro(records, out_dir, "fig2"))
            if render_figures:
                from . import figures
                paths.append(figures.render_gradient_field(
                    FIG2_MU_GRID, FIG2_SIGMA_GRID, fields,
                    os.path.join(out_dir, "fig2.png")))
        return records, paths

    if name == "fig3":
        cfg = ExperimentConfig(**FIG3_CONFIG)
        result = run_experiment(cfg)
        if out_dir is not None:
            paths.append(_write_repro(result.records, out_dir, "fig3"))
            hists = {}
            for gamma in cfg.gamma_list:
                returns = final_return_samples(cfg, result, gamma)
                hist = reward_histogram(returns, HIST_BINS, HIST_RANGE)
                hists[gamma] = hist
                hist_path = os.path.join(
                    out_dir, f"fig3_hist_gamma_{_fig_gamma_tag(gamma)}.csv")
                write_histogram_csv(hist, hist_path)
                paths.append(hist_path)
            if render_figures:
                from . import figures
                paths.append(figures.render_histograms(
                    hists, os.path.join(out_dir, "fig3.png")))
        return result.records, paths

    cfg = ExperimentConfig(**FIG4_CONFIG)
    result = run_experiment(cfg)
    if out_dir is not None:
        paths.append(_write_repro(result.records, out_dir, "fig4"))
        if render_figures:
            from . import figures
            paths.append(figures.render_badminton_trends(
                result.records, os.path.join(out_dir, "fig4.png")))
    return result.records, paths


def _write_repro(records, out_dir, stem: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{stem}.csv")
    emit_csv(records, path)
    return path
