"""Sweep experiments over synthetic task families.

Both experiments share the same grid of runs (confounder count x seed), so
the suite runner is factored out; callers that need both sets of tables can
run the grid once and aggregate it twice.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import UndefinedTauError
from .metrics import kendall_tau
from .pipeline import RunConfig, RunReport, run_pipeline
from .propensity import _derived_seed
from .synth import SynthConfig

DEFAULT_K_VALUES = tuple(range(0, 11))
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class SuiteRun:
    k: int
    seed: int
    run_seed: int
    run: RunReport


@dataclass(frozen=True)
class ExperimentResult:
    rows: list
    summary: list
    suite: list


def run_suite(
    base: SynthConfig,
    template: RunConfig,
    k_values=DEFAULT_K_VALUES,
    seeds=DEFAULT_SEEDS,
    progress=None,
) -> list[SuiteRun]:
    """Run the full pipeline once per (confounder count, seed) grid cell."""
    suite = []
    for k in k_values:
        for s in seeds:
            synth = replace(base, n_confounders=k, seed=_derived_seed(s, k, 11))
            run_seed = _derived_seed(s, k, 13)
            cfg = replace(
                template, synth=synth, data=None, schema=None, seed=run_seed, out_dir=None
            )
            suite.append(SuiteRun(k=k, seed=s, run_seed=run_seed, run=run_pipeline(cfg)))
            if progress is not None:
                progress(suite[-1])
    return suite


def confounder_rows(suite: list[SuiteRun]) -> tuple[list[dict], list[dict]]:
    """Per-strategy spread and error rows, plus per-(k, strategy) means."""
    rows = []
    for cell in suite:
        run = cell.run
        true_ate = run.true_ate
        ate_by_id = {e.pipeline_id: e.ate for e in run.evaluations}
        rows.append(
            {
                "k": cell.k, "seed": cell.seed, "strategy": "unadjusted", "n_selected": 1,
                "ate_range": 0.0, "point_estimate": run.unadjusted_ate,
                "sq_error": (run.unadjusted_ate - true_ate) ** 2,
            }
        )
        for sel in run.selections:
            estimates = [ate_by_id[pid] for pid in sel.selected]
            point = float(np.mean(estimates)) if estimates else None
            rows.append(
                {
                    "k": cell.k, "seed": cell.seed, "strategy": sel.strategy,
                    "n_selected": len(sel.selected), "ate_range": sel.ate_range,
                    "point_estimate": point,
                    "sq_error": None if point is None else (point - true_ate) ** 2,
                }
            )

    summary = []
    strategies = []
    for row in rows:
        if row["strategy"] not in strategies:
            strategies.append(row["strategy"])
    k_values = sorted({row["k"] for row in rows})
    for k in k_values:
        for strat in strategies:
            cells = [r for r in rows if r["k"] == k and r["strategy"] == strat]
            errs = [r["sq_error"] for r in cells if r["sq_error"] is not None]
            summary.append(
                {
                    "k": k, "strategy": strat, "n_runs": len(cells),
                    "mean_ate_range": float(np.mean([r["ate_range"] for r in cells])),
                    "mean_n_selected": float(np.mean([r["n_selected"] for r in cells])),
                    "mean_sq_error": float(np.mean(errs)) if errs else None,
                    "n_with_estimate": len(errs),
                }
            )
    return rows, summary


def correlation_rows(suite: list[SuiteRun]) -> tuple[list[dict], list[dict]]:
    """Kendall tau between candidate SMD and three effect-error rankings.

    Works from the per-candidate matched estimates, so suites run with
    n_bootstraps=0 (no A2A) are enough for this experiment.
    """
    rows = []
    for cell in suite:
        run = cell.run
        scored = [
            oc for oc in run.outcomes
            if oc.status in ("ok", "a2a-failed") and oc.balance is not None
            and oc.matched_ate is not None
        ]
        base_row = {"k": cell.k, "seed": cell.seed, "n_candidates": len(scored)}
        if len(scored) < 3:
            rows.append({**base_row, "skipped": "fewer than 3 scored candidates"})
            continue
        smd = [abs(oc.balance.scalar()) for oc in scored]
        correction = [abs(run.unadjusted_ate - oc.matched_ate) for oc in scored]
        truth = [abs(oc.matched_ate - run.true_ate) for oc in scored]
        rng = np.random.default_rng(np.random.SeedSequence((cell.seed, cell.k, 999)))
        random_rank = rng.random(len(scored))
        try:
            tau_c, p_c = kendall_tau(smd, correction)
            tau_t, p_t = kendall_tau(smd, truth)
            tau_r, p_r = kendall_tau(smd, random_rank)
        except UndefinedTauError as exc:
            rows.append({**base_row, "skipped": str(exc)})
            continue
        rows.append(
            {
                **base_row, "skipped": None,
                "tau_correction": tau_c, "p_correction": p_c,
                "tau_truth": tau_t, "p_truth": p_t,
                "tau_random": tau_r, "p_random": p_r,
            }
        )

    summary = []
    scored = [r for r in rows if r.get("skipped") is None]
    k_values = sorted({row["k"] for row in rows})
    for k in k_values:
        cells = [r for r in scored if r["k"] == k]
        if not cells:
            summary.append({"k": k, "n_runs": 0, "mean_tau_correction": None,
                            "mean_tau_truth": None, "mean_tau_random": None})
            continue
        summary.append(
            {
                "k": k, "n_runs": len(cells),
                "mean_tau_correction": float(np.mean([r["tau_correction"] for r in cells])),
                "mean_tau_truth": float(np.mean([r["tau_truth"] for r in cells])),
                "mean_tau_random": float(np.mean([r["tau_random"] for r in cells])),
            }
        )
    if scored:
        summary.append(
            {
                "k": "all", "n_runs": len(scored),
                "mean_tau_correction": float(np.mean([r["tau_correction"] for r in scored])),
                "mean_tau_truth": float(np.mean([r["tau_truth"] for r in scored])),
                "mean_tau_random": float(np.mean([r["tau_random"] for r in scored])),
            }
        )
    return rows, summary


def experiment_confounders(
    base: SynthConfig, template: RunConfig, k_values=DEFAULT_K_VALUES, seeds=DEFAULT_SEEDS,
    progress=None,
) -> ExperimentResult:
    suite = run_suite(base, template, k_values, seeds, progress)
    rows, summary = confounder_rows(suite)
    return ExperimentResult(rows=rows, summary=summary, suite=suite)


def experiment_smd_correlation(
    base: SynthConfig, template: RunConfig, k_values=DEFAULT_K_VALUES, seeds=DEFAULT_SEEDS,
    progress=None,
) -> ExperimentResult:
    suite = run_suite(base, template, k_values, seeds, progress)
    rows, summary = correlation_rows(suite)
    return ExperimentResult(rows=rows, summary=summary, suite=suite)
