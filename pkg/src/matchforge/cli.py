"""Command line entry points: single runs and the two sweep experiments."""

from __future__ import annotations

import argparse
import os
import sys

from .a2a import HillClimbConfig
from .errors import MatchforgeError, ValidationError
from .experiments import (
    DEFAULT_K_VALUES,
    DEFAULT_SEEDS,
    confounder_rows,
    correlation_rows,
    run_suite,
)
from .pipeline import RunConfig, default_grid, run_pipeline
from .report import dump_json, write_csv
from .synth import SynthConfig

CONFOUNDER_RUN_COLS = [
    "k", "seed", "strategy", "n_selected", "ate_range", "point_estimate", "sq_error",
]
CONFOUNDER_SUMMARY_COLS = [
    "k", "strategy", "n_runs", "mean_ate_range", "mean_n_selected", "mean_sq_error",
    "n_with_estimate",
]
CORRELATION_RUN_COLS = [
    "k", "seed", "n_candidates", "skipped", "tau_correction", "p_correction",
    "tau_truth", "p_truth", "tau_random", "p_random",
]
CORRELATION_SUMMARY_COLS = [
    "k", "n_runs", "mean_tau_correction", "mean_tau_truth", "mean_tau_random",
]


def _parse_synth_arg(text: str) -> int:
    key, sep, value = text.partition("=")
    if key != "k" or not sep:
        raise ValidationError(f"--synth expects k=<count>, got {text!r}")
    try:
        return int(value)
    except ValueError:
        raise ValidationError(f"--synth expects an integer confounder count, got {value!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    """Accept either a comma list (0,3,7) or an inclusive range (0..10)."""
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(part) for part in text.split(",") if part.strip() != "")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bootstraps", type=int, default=None, metavar="N",
                   help="artificial tasks per candidate (default 100; 20 with --quick)")
    p.add_argument("--seed", type=int, default=0, metavar="Z")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--smd-agg", choices=("mean", "max"), default="mean")
    p.add_argument("--eps", type=float, default=0.15)
    p.add_argument("--min-pts", type=int, default=2)
    p.add_argument("--workers", type=int, default=1,
                   help="bootstrap worker processes (MATCHFORGE_THREADS caps this)")
    p.add_argument("--rf-trees", type=int, default=None,
                   help="forest size (default 100; 50 with --quick)")
    p.add_argument("--cv-folds", type=int, default=5)
    p.add_argument("--climb-iters", type=int, default=None,
                   help="hill-climb step budget (default 20000; 4000 with --quick)")
    p.add_argument("--climb-patience", type=int, default=None,
                   help="stop after this many consecutive rejections (default 2000; 800 with --quick)")
    p.add_argument("--quick", action="store_true",
                   help="small-scale preset: n=600, 20 bootstraps, 50 trees")
    p.add_argument("--synth-n", type=int, default=None,
                   help="synthetic sample count (default 3000; 600 with --quick)")
    p.add_argument("--synth-d", type=int, default=10, help="synthetic feature count")
    p.add_argument("--effect-scale", type=float, default=1.0)
    p.add_argument("--noise-sd", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="matchforge",
        description="Propensity-score matching with A2A validation and strategy selection.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="evaluate every candidate pipeline on one task")
    run_p.add_argument("--data", metavar="F", help="CSV file with covariates, treatment, outcome")
    run_p.add_argument("--schema", metavar="S", help="JSON column-kind map for --data")
    run_p.add_argument("--synth", metavar="k=K", default=None,
                       help="generate a synthetic task with K confounders instead of --data")
    run_p.add_argument("--synth-seed", type=int, default=0)
    _add_common(run_p)

    exp_p = sub.add_parser("experiment", help="run a sweep over the synthetic task family")
    exp_p.add_argument("which", choices=("confounders", "smd-correlation"))
    exp_p.add_argument("--k-values", default=None, metavar="0..10",
                       help="confounder counts, as a,b,c or lo..hi (default 0..10)")
    exp_p.add_argument("--seeds", default=None, metavar="0,1,2",
                       help="suite seeds (default 0..4)")
    _add_common(exp_p)

    return p


def _quick_default(value, quick_value, normal_value, quick: bool):
    if value is not None:
        return value
    return quick_value if quick else normal_value


def _resolve_scales(args):
    boot = _quick_default(args.bootstraps, 20, 100, args.quick)
    rf_trees = _quick_default(args.rf_trees, 50, 100, args.quick)
    n = _quick_default(args.synth_n, 600, 3000, args.quick)
    climb = HillClimbConfig(
        max_iters=_quick_default(args.climb_iters, 4000, 20000, args.quick),
        patience=_quick_default(args.climb_patience, 800, 2000, args.quick),
    )
    return boot, rf_trees, n, climb


def cmd_run(args) -> int:
    boot, rf_trees, n, climb = _resolve_scales(args)
    synth = None
    if args.synth is not None:
        synth = SynthConfig(
            n_samples=n, n_features=args.synth_d, n_confounders=_parse_synth_arg(args.synth),
            effect_scale=args.effect_scale, noise_sd=args.noise_sd, seed=args.synth_seed,
        )
    cfg = RunConfig(
        data=args.data, schema=args.schema, synth=synth,
        candidates=default_grid(rf_trees), n_bootstraps=boot, seed=args.seed,
        smd_agg=args.smd_agg, eps=args.eps, min_pts=args.min_pts, out_dir=args.out,
        climb=climb, cv_folds=args.cv_folds, workers=args.workers,
    )
    run = run_pipeline(cfg)
    for row in run.report["candidates"]:
        note = "" if row["error"] is None else f" ({row['error']})"
        print(f"{row['pipeline_id']}: {row['status']}{note}")
    for sel in run.report["selections"]:
        chosen = ", ".join(sel["selected"]) if sel["selected"] else "(none)"
        print(f"{sel['strategy']}: {chosen}")
    print(f"report written to {args.out}")
    return run.exit_code


def cmd_experiment(args) -> int:
    boot, rf_trees, n, climb = _resolve_scales(args)
    k_values = DEFAULT_K_VALUES if args.k_values is None else _parse_int_list(args.k_values)
    seeds = DEFAULT_SEEDS if args.seeds is None else _parse_int_list(args.seeds)
    base = SynthConfig(
        n_samples=n, n_features=args.synth_d, n_confounders=0,
        effect_scale=args.effect_scale, noise_sd=args.noise_sd, seed=0,
    )
    template = RunConfig(
        synth=base, candidates=default_grid(rf_trees), n_bootstraps=boot, seed=args.seed,
        smd_agg=args.smd_agg, eps=args.eps, min_pts=args.min_pts, out_dir=None,
        climb=climb, cv_folds=args.cv_folds, workers=args.workers,
    )

    def progress(cell):
        print(f"k={cell.k} seed={cell.seed}: exit {cell.run.exit_code}", file=sys.stderr)

    suite = run_suite(base, template, k_values, seeds, progress=progress)
    if args.which == "confounders":
        rows, summary = confounder_rows(suite)
        run_cols, summary_cols = CONFOUNDER_RUN_COLS, CONFOUNDER_SUMMARY_COLS
    else:
        rows, summary = correlation_rows(suite)
        run_cols, summary_cols = CORRELATION_RUN_COLS, CORRELATION_SUMMARY_COLS

    os.makedirs(args.out, exist_ok=True)
    stem = args.which.replace("-", "_")
    write_csv(os.path.join(args.out, f"{stem}_runs.csv"), run_cols, rows)
    write_csv(os.path.join(args.out, f"{stem}_summary.csv"), summary_cols, summary)
    echo = {
        "experiment": args.which, "k_values": list(k_values), "seeds": list(seeds),
        "n_bootstraps": boot, "rf_trees": rf_trees, "n_samples": n, "seed": args.seed,
        "smd_agg": args.smd_agg, "eps": args.eps, "min_pts": args.min_pts,
        "climb": {"max_iters": climb.max_iters, "patience": climb.patience},
    }
    with open(os.path.join(args.out, f"{stem}_config.json"), "w") as fh:
        fh.write(dump_json(echo))
    print(f"experiment tables written to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_experiment(args)
    except MatchforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
