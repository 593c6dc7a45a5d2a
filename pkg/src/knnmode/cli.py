"""Command-line entry point: ``knnmode [options]`` or ``python -m knnmode``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, KnnModeError
from .harness import (
    PRESET_SWEEPS,
    PRESETS,
    SWEEP_VARIABLES,
    ExperimentConfig,
    emit_results,
    preset,
    results_to_csv,
    results_to_json,
    run_trials,
    sweep,
)

# flag name -> ExperimentConfig field
_FIELDS = {
    "dataset": "dataset", "synthetic": "synthetic", "n": "n", "m": "m", "gap_scale": "gap_scale",
    "group_size": "group_size", "model": "model", "sigma": "sigma", "cap": "cap",
    "schedule": "schedule", "delta": "delta", "c_beta": "c_beta", "k": "k",
    "k_fraction": "k_fraction", "mode": "mode", "budgets": "budgets", "methods": "methods",
    "trials": "trials", "seed": "seed", "normalize_queries": "normalize_queries",
    "safety_cap": "safety_cap", "fixed_instance": "resample",
}


def _int_list(s: str) -> tuple:
    try:
        return tuple(int(float(v)) for v in s.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


def _float_list(s: str) -> list:
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="knnmode",
        description="Run adaptive k-NN mode estimation trials and sweeps under noisy distance oracles.",
    )
    src = p.add_argument_group("data")
    src.add_argument("--dataset", metavar="PATH", help="CSV or raw-binary point file")
    src.add_argument("--synthetic", metavar="FAMILY",
                     help="uniform-cube, gaussian-clusters, binary-hypercube or line-with-gaps")
    src.add_argument("--n", type=int, help="points per trial (subsample size for --dataset)")
    src.add_argument("--m", type=int, help="dimension of synthetic points")
    src.add_argument("--gap-scale", type=float)
    src.add_argument("--group-size", type=int, help="planted neighbours in line-with-gaps")
    src.add_argument("--fixed-instance", action="store_const", const=False, default=None,
                     help="reuse one instance for every trial")
    orc = p.add_argument_group("oracle")
    orc.add_argument("--model", choices=["1", "2", "exact"], help="1: dimension sampling, 2: additive noise")
    orc.add_argument("--sigma", type=float)
    orc.add_argument("--cap", action="store_const", const=True, default=None,
                     help="resolve a pair exactly after m queries")
    est = p.add_argument_group("estimator")
    est.add_argument("--schedule", choices=["theoretical", "empirical"])
    est.add_argument("--delta", type=float)
    est.add_argument("--c-beta", type=float)
    est.add_argument("--k", type=int)
    est.add_argument("--k-fraction", type=float, help="set k = round(fraction * n)")
    est.add_argument("--mode", choices=["delta-true", "budget"])
    est.add_argument("--budgets", type=_int_list, metavar="LIST", help="comma-separated budget grid")
    est.add_argument("--methods", type=lambda s: tuple(s.split(",")), metavar="LIST",
                     help="subset of adaptive,naive-plus,random-sampling")
    est.add_argument("--safety-cap", type=int)
    run = p.add_argument_group("run")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--preset", choices=sorted(PRESETS))
    run.add_argument("--sweep", choices=SWEEP_VARIABLES, help="sweep this variable over --grid")
    run.add_argument("--grid", type=_float_list, metavar="LIST")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--normalize-queries", action="store_const", const=True, default=None,
                     help="report queries divided by m n^2")
    out = p.add_argument_group("output")
    out.add_argument("--out", metavar="PATH", help="output file (stdout if omitted)")
    out.add_argument("--format", choices=["csv", "json"], default="csv")
    out.add_argument("--verbose", action="store_true", help="include per-trial records in JSON")
    out.add_argument("--quiet", action="store_true", help="no per-trial log lines")
    return p


def config_from_args(args) -> tuple:
    over = {}
    for flag, name in _FIELDS.items():
        v = getattr(args, flag)
        if v is not None:
            over[name] = v
    if "dataset" in over:
        over.setdefault("synthetic", None)
    elif "synthetic" in over:
        over.setdefault("dataset", None)
    if over.get("model") == "exact":
        over["model"] = "exact"
    if args.preset:
        cfg = preset(args.preset, **over)
        var, grid = PRESET_SWEEPS.get(args.preset, (None, None))
    else:
        cfg = ExperimentConfig(**over)
        var, grid = None, None
    if args.sweep:
        var, grid = args.sweep, args.grid
        if not grid:
            raise ConfigError("--sweep needs --grid")
    return cfg, var, grid


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg, var, grid = config_from_args(args)
        if var is None:
            result = run_trials(cfg, args.workers)
        else:
            result = sweep(cfg, var, grid, args.workers)
        if args.out:
            emit_results(result, args.out, args.format, args.verbose)
        else:
            text = results_to_json(result, args.verbose) if args.format == "json" else results_to_csv(result)
            sys.stdout.write(text)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (KnnModeError, OSError, RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
