"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 partial cell failures,
3 I/O error.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .harness import (
    ExperimentConfig,
    emit_csv,
    gradient_field_records,
    repro_fig,
    run_experiment,
)

_ENV_CLI_TO_INTERNAL = {
    "portfolio": "portfolio",
    "toy-badminton": "toy_badminton",
    "lin-toy": "lin_toy",
    "contextual": "contextual",
}


class CliConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliConfigError(message)


def _gamma_list(text: str):
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise CliConfigError(f"bad gamma list {text!r}") from exc


def _parse_grid(spec: str):
    """Grid spec 'mu=-2:2:21,sigma=0.1:2:21' -> (mu_grid, sigma_grid)."""
    axes = {}
    for part in spec.split(","):
        name, _, rng = part.partition("=")
        try:
            lo, hi, num = rng.split(":")
            axes[name.strip()] = np.linspace(float(lo), float(hi), int(num))
        except ValueError as exc:
            raise CliConfigError(f"bad grid spec {part!r}") from exc
    missing = {"mu", "sigma"} - set(axes)
    if missing:
        raise CliConfigError(f"grid spec is missing axes: {sorted(missing)}")
    if np.any(axes["sigma"] <= 0):
        raise CliConfigError("sigma grid values must be positive")
    return axes["mu"], axes["sigma"]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="riskgrad",
                     description="Risk-sensitive episodic policy search experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment sweep")
    run.add_argument("--env", required=True, choices=sorted(_ENV_CLI_TO_INTERNAL))
    run.add_argument("--algo", default="pg", choices=["pg", "npg", "reps"])
    run.add_argument("--gamma", default="0.0", help="comma-separated list")
    run.add_argument("--samples", type=int, default=500)
    run.add_argument("--iters", type=int, default=100)
    run.add_argument("--seeds", type=int, default=1)
    run.add_argument("--alpha", type=float, default=0.05)
    run.add_argument("--epsilon", type=float, default=0.5)
    run.add_argument("--seed", type=int, default=0, help="base seed")
    run.add_argument("--scale-step-by-gamma", action="store_true")
    run.add_argument("--out", required=True)

    gf = sub.add_parser("gradfield", help="exact 1-D gradient field")
    gf.add_argument("--gamma", type=float, required=True)
    gf.add_argument("--grid", default="mu=-2:2:21,sigma=0.1:2:21")
    gf.add_argument("--out", required=True)
    gf.add_argument("--no-figures", action="store_true")

    rp = sub.add_parser("repro", help="regenerate a canned experiment dataset")
    rp.add_argument("target", choices=["fig2", "fig3", "fig4"])
    rp.add_argument("--out", required=True, help="output directory")
    rp.add_argument("--no-figures", action="store_true")
    return parser


def _cmd_run(args) -> int:
    cfg = ExperimentConfig(
        experiment=_ENV_CLI_TO_INTERNAL[args.env],
        algo=args.algo,
        gamma_list=_gamma_list(args.gamma),
        seeds=args.seeds,
        samples_per_iter=args.samples,
        iterations=args.iters,
        step_size=args.alpha,
        epsilon=args.epsilon,
        output_path=args.out,
        base_seed=args.seed,
        scale_step_by_gamma=args.scale_step_by_gamma,
    )
    result = run_experiment(cfg)
    emit_csv(result.records, args.out)
    print(f"wrote {len(result.records)} records to {args.out}")
    for failure in result.failures:
        print(f"cell failed (gamma={failure.gamma:g}, seed={failure.seed}): "
              f"{failure.message}", file=sys.stderr)
    return 2 if result.failures else 0


def _cmd_gradfield(args) -> int:
    mu_grid, sigma_grid = _parse_grid(args.grid)
    records = gradient_field_records(args.gamma, mu_grid, sigma_grid)
    emit_csv(records, args.out)
    print(f"wrote {len(records)} grid points to {args.out}")
    if not args.no_figures:
        from . import figures
        png = os.path.splitext(args.out)[0] + ".png"
        figures.render_gradient_field(mu_grid, sigma_grid, {args.gamma: records}, png)
        print(f"wrote {png}")
    return 0


def _cmd_repro(args) -> int:
    _, paths = repro_fig(args.target, args.out, render_figures=not args.no_figures)
    for path in paths:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "gradfield":
            return _cmd_gradfield(args)
        return _cmd_repro(args)
    except (CliConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
