"""Run artifacts: a machine-readable report plus CSV/markdown companions.

Serialization is deliberately boring so reruns with the same config and seed
produce byte-identical files: keys are sorted, floats use their shortest
round-trip form, and nothing derived from wall clock or worker count is
written.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import platform

import numpy as np
import sklearn


def _plain(value):
    """Convert numpy scalars/arrays and tuples into JSON-native types."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    return value


def dump_json(data) -> str:
    return json.dumps(_plain(data), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row.get(name)) for name in fieldnames])


def _diag_dict(diag) -> dict | None:
    if diag is None:
        return None
    if isinstance(diag, dict):
        return diag
    return diag.to_dict()


def _balance_dict(balance) -> dict | None:
    if balance is None:
        return None
    return {
        "per_feature": [
            {"name": f.name, "kind": f.kind, "value": f.value} for f in balance.per_feature
        ],
        "aggregate": balance.aggregate,
        "max_abs": balance.max_abs,
        "agg": balance.agg,
        "valid": balance.valid,
    }


def _candidate_row(oc) -> dict:
    spec = oc.spec
    return {
        "pipeline_id": spec.pipeline_id,
        "model": spec.model,
        "use_logit_link": spec.use_logit_link,
        "matcher": spec.matcher,
        "rf_trees": spec.rf_trees,
        "status": oc.status,
        "error": oc.error,
        "cv_diagnostics": _diag_dict(oc.cv_mean),
        "fit_diagnostics": _diag_dict(oc.fit_diags),
        "overlap_valid": oc.overlap_valid,
        "matched_ate": oc.matched_ate,
        "balance": _balance_dict(oc.balance),
        "match": None
        if oc.match_dict is None
        else {
            "method": oc.match_dict["method"],
            "n_pairs": len(oc.match_dict["pairs"]),
            "total_distance": oc.match_dict["total_distance"],
        },
        "a2a": {
            "mean": oc.a2a_mean,
            "n_success": len(oc.a2a_values),
            "n_failed": len(oc.a2a_failures),
        },
    }


def build_report(
    *, cfg, dataset, synth_task, unadjusted_ate, unadjusted_smd, outcomes,
    evaluations, selections, exit_code,
) -> dict:
    treatment = dataset.column(dataset.treatment_name)
    n_treated = int(treatment.sum())
    config = {
        "seed": cfg.seed,
        "n_bootstraps": cfg.n_bootstraps,
        "smd_agg": cfg.smd_agg,
        "eps": cfg.eps,
        "min_pts": cfg.min_pts,
        "cv_folds": cfg.cv_folds,
        "climb": {
            "max_iters": cfg.climb.max_iters,
            "patience": cfg.climb.patience,
            "seed": cfg.climb.seed,
            "membership_probs": list(cfg.climb.membership_probs),
        },
        "candidates": [c.pipeline_id for c in cfg.candidates],
        "data": cfg.data,
        "schema": cfg.schema,
        "synth": None if cfg.synth is None else dataclasses.asdict(cfg.synth),
    }
    task = {
        "source": "synth" if synth_task is not None else "csv",
        "n_rows": len(treatment),
        "n_treated": n_treated,
        "n_control": len(treatment) - n_treated,
        "columns": [{"name": s.name, "kind": s.kind} for s in dataset.columns],
        "true_ate": None if synth_task is None else synth_task.true_ate,
        "synth_meta": None if synth_task is None else synth_task.meta,
    }
    return {
        "config": config,
        "task": task,
        "unadjusted": {"ate": unadjusted_ate, "smd": unadjusted_smd},
        "candidates": [_candidate_row(oc) for oc in outcomes],
        "evaluations": [dataclasses.asdict(e) for e in evaluations],
        "selections": [s.to_dict() for s in selections],
        "exit_code": exit_code,
        "provenance": {
            "package": "matchforge 0.1.0",
            "python": platform.python_version(),
            "numpy": np.__version__,
            "sklearn": sklearn.__version__,
        },
    }


def _markdown(report: dict) -> str:
    lines = ["# Run report", ""]
    task = report["task"]
    lines.append(
        f"Task: {task['source']}, {task['n_rows']} rows "
        f"({task['n_treated']} treated / {task['n_control']} control)."
    )
    ua = report["unadjusted"]
    lines.append(f"Unadjusted ATE {ua['ate']:.4f}, SMD {ua['smd']:.4f}.")
    if task["true_ate"] is not None:
        lines.append(f"True ATE {task['true_ate']:.4f}.")
    lines += ["", "## Candidates", ""]
    lines.append("| pipeline | status | SMD | A2A | ATE | overlap ok |")
    lines.append("|---|---|---|---|---|---|")
    eval_by_id = {e["pipeline_id"]: e for e in report["evaluations"]}
    for row in report["candidates"]:
        ev = eval_by_id.get(row["pipeline_id"])
        smd = f"{ev['smd']:.4f}" if ev else ""
        a2a = f"{ev['a2a']:.4f}" if ev else ""
        est = f"{row['matched_ate']:.4f}" if row["matched_ate"] is not None else ""
        lines.append(
            f"| {row['pipeline_id']} | {row['status']} | {smd} | {a2a} | {est} "
            f"| {row['overlap_valid']} |"
        )
    lines += ["", "## Strategy selections", ""]
    lines.append("| strategy | selected | ATE range | note |")
    lines.append("|---|---|---|---|")
    for sel in report["selections"]:
        chosen = ", ".join(sel["selected"]) if sel["selected"] else "(none)"
        note = sel["note"] or ""
        lines.append(f"| {sel['strategy']} | {chosen} | {sel['ate_range']:.4f} | {note} |")
    lines += ["", f"Exit code: {report['exit_code']}", ""]
    return "\n".join(lines)


def write_report(run, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(dump_json(run.report))
    with open(os.path.join(out_dir, "report.md"), "w") as fh:
        fh.write(_markdown(run.report))

    balance_rows = []
    for oc in run.outcomes:
        if oc.balance is None:
            continue
        for fb in oc.balance.per_feature:
            balance_rows.append(
                {"pipeline_id": oc.spec.pipeline_id, "feature": fb.name, "kind": fb.kind,
                 "value": fb.value}
            )
    write_csv(
        os.path.join(out_dir, "balance.csv"),
        ["pipeline_id", "feature", "kind", "value"],
        balance_rows,
    )

    a2a_rows = []
    for oc in run.outcomes:
        for b, value in oc.a2a_values:
            a2a_rows.append(
                {"pipeline_id": oc.spec.pipeline_id, "bootstrap": b, "abs_matched_ate": value,
                 "status": "ok"}
            )
        for b, err in oc.a2a_failures:
            a2a_rows.append(
                {"pipeline_id": oc.spec.pipeline_id, "bootstrap": b, "abs_matched_ate": None,
                 "status": err}
            )
    a2a_rows.sort(key=lambda r: (r["pipeline_id"], r["bootstrap"]))
    write_csv(
        os.path.join(out_dir, "a2a_bootstraps.csv"),
        ["pipeline_id", "bootstrap", "abs_matched_ate", "status"],
        a2a_rows,
    )

    scatter_rows = [
        {
            "pipeline_id": e.pipeline_id, "smd": e.smd, "a2a": e.a2a, "ate": e.ate,
            "smd_valid": e.smd_valid, "overlap_valid": e.overlap_valid,
        }
        for e in run.evaluations
    ]
    write_csv(
        os.path.join(out_dir, "smd_a2a_scatter.csv"),
        ["pipeline_id", "smd", "a2a", "ate", "smd_valid", "overlap_valid"],
        scatter_rows,
    )

    matches_dir = os.path.join(out_dir, "matches")
    os.makedirs(matches_dir, exist_ok=True)
    for oc in run.outcomes:
        if oc.match_dict is None:
            continue
        path = os.path.join(matches_dir, f"{oc.spec.pipeline_id}.json")
        with open(path, "w") as fh:
            fh.write(dump_json(oc.match_dict))
