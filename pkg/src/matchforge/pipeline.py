"""End-to-end runs: fit every candidate pipeline, score it, apply strategies."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .a2a import HillClimbConfig, make_artificial_task, task_reference
from .errors import MatchforgeError, ValidationError
from .matching import extract_matched, match_nearest, match_optimal
from .metrics import BalanceReport, ate, balance_report
from .parallel import run_ordered
from .propensity import (
    PropensityConfig,
    _derived_seed,
    _fit_model,
    _mean_diagnostics,
    _stratified_folds,
    clip_and_transform,
    diagnostics_for_scores,
)
from .strategy import CandidateEvaluation, SelectionResult, run_strategies
from .synth import SynthConfig, SynthTask, generate
from .tabular import Dataset, DesignMatrix, encode, impute, load_csv, load_schema, split_by_treatment

LINKS = (False, True)
MATCHERS = ("nearest", "optimal")


@dataclass(frozen=True)
class PipelineSpec:
    """One candidate: a propensity model, a matching scale, and a matcher."""

    model: str
    use_logit_link: bool
    matcher: str
    rf_trees: int = 100
    clip_bounds: tuple[float, float] = (0.05, 0.95)

    def __post_init__(self) -> None:
        if self.matcher not in MATCHERS:
            raise ValidationError(f"unknown matcher {self.matcher!r}")

    @property
    def pipeline_id(self) -> str:
        link = "logit" if self.use_logit_link else "raw"
        return f"{self.model}_{link}_{self.matcher}"

    def propensity_config(self, seed: int, cv_folds: int = 5) -> PropensityConfig:
        return PropensityConfig(
            model=self.model,
            use_logit_link=self.use_logit_link,
            clip_bounds=self.clip_bounds,
            rf_trees=self.rf_trees,
            cv_folds=cv_folds,
            seed=seed,
        )

    def estimate_matched_ate(self, dataset: Dataset, seed: int) -> float:
        """Full pipeline on one dataset: encode, fit, match, matched ATE."""
        design = encode(dataset)
        cfg = self.propensity_config(seed)
        model = _fit_model(design.features, design.treatment, cfg)
        values = clip_and_transform(model.predict_proba(design.features), cfg)
        return matched_ate_from_values(design, values, self.matcher, seed).ate


def default_grid(rf_trees: int = 100) -> tuple[PipelineSpec, ...]:
    """The 3 models x 2 matching scales x 2 matchers candidate grid."""
    return tuple(
        PipelineSpec(model=m, use_logit_link=link, matcher=matcher, rf_trees=rf_trees)
        for m in ("LR", "CLR", "RF")
        for link in LINKS
        for matcher in MATCHERS
    )


@dataclass(frozen=True)
class MatchedEstimate:
    ate: float
    result: object
    pop_large: object
    pop_small: object
    rows_large: np.ndarray
    rows_small: np.ndarray

    def pair_rows(self, design: DesignMatrix) -> list[list[int]]:
        """Matched pairs as (larger-arm row, smaller-arm row) source indices."""
        return [
            [int(design.group_index[self.rows_large[a]]), int(design.group_index[self.rows_small[b]])]
            for a, b in self.result.pairs
        ]


def matched_ate_from_values(
    design: DesignMatrix, matching_values: np.ndarray, matcher: str, seed: int = 0
) -> MatchedEstimate:
    """Match arms on precomputed values and estimate the effect on the pairs."""
    idx0, idx1 = split_by_treatment(design)
    large, small = (idx0, idx1) if len(idx0) >= len(idx1) else (idx1, idx0)
    if matcher == "nearest":
        result = match_nearest(matching_values[large], matching_values[small], seed)
    else:
        result = match_optimal(matching_values[large], matching_values[small])
    pop_large, pop_small = extract_matched(design, result)
    treated_is_large = bool(design.treatment[large[0]] == 1)
    y_large = pop_large.outcomes()
    y_small = pop_small.outcomes()
    est = ate(y_small, y_large) if treated_is_large else ate(y_large, y_small)
    return MatchedEstimate(
        ate=float(est),
        result=result,
        pop_large=pop_large,
        pop_small=pop_small,
        rows_large=large,
        rows_small=small,
    )


@dataclass(frozen=True)
class RunConfig:
    data: str | None = None
    schema: str | None = None
    synth: SynthConfig | None = None
    candidates: tuple[PipelineSpec, ...] = ()
    n_bootstraps: int = 100
    seed: int = 0
    smd_agg: str = "mean"
    eps: float = 0.15
    min_pts: int = 2
    out_dir: str | None = None
    climb: HillClimbConfig = field(default_factory=HillClimbConfig)
    cv_folds: int = 5
    workers: int = 1

    def __post_init__(self) -> None:
        if self.synth is None and (self.data is None or self.schema is None):
            raise ValidationError("need either a synth config or --data plus --schema")
        if not self.candidates:
            object.__setattr__(self, "candidates", default_grid())
        ids = [c.pipeline_id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate candidate pipeline ids")


@dataclass
class CandidateOutcome:
    spec: PipelineSpec
    status: str = "ok"  # ok | fit-failed | matching-failed | a2a-failed
    error: str | None = None
    cv_fold_diags: list = field(default_factory=list)
    cv_mean: object = None
    fit_diags: object = None
    overlap_valid: bool = False
    balance: BalanceReport | None = None
    matched_ate: float | None = None
    match_dict: dict | None = None
    a2a_values: list[tuple[int, float]] = field(default_factory=list)
    a2a_failures: list[tuple[int, str]] = field(default_factory=list)
    a2a_mean: float | None = None


@dataclass
class RunReport:
    report: dict
    outcomes: list[CandidateOutcome]
    evaluations: list[CandidateEvaluation]
    selections: list[SelectionResult]
    exit_code: int
    unadjusted_ate: float
    unadjusted_smd: float
    true_ate: float | None
    dataset: Dataset
    synth_task: SynthTask | None


def load_task(cfg: RunConfig) -> tuple[Dataset, SynthTask | None]:
    if cfg.synth is not None:
        task = generate(cfg.synth)
        return impute(task.dataset), task
    schema = load_schema(cfg.schema)
    return impute(load_csv(cfg.data, schema)), None


def _model_keys(candidates) -> list[tuple[str, int]]:
    keys = []
    for c in candidates:
        key = (c.model, c.rf_trees)
        if key not in keys:
            keys.append(key)
    return keys


def _bootstrap_eval(payload):
    """One A2A bootstrap: build the artificial task, score every candidate.

    Candidates differing only in link or matcher share the model fit, which
    is the identical computation (the fit seed does not depend on them).
    """
    (dataset, larger_rows, reference, probs, b, seed, climb, agg, candidates) = payload
    out: dict[str, tuple[float | None, str | None]] = {}
    try:
        task_ds, _, fit_seed = make_artificial_task(
            dataset, larger_rows, reference, probs, b, seed, climb, agg
        )
        design = encode(task_ds)
    except MatchforgeError as exc:
        return b, {c.pipeline_id: (None, str(exc)) for c in candidates}
    for model, rf_trees in _model_keys(candidates):
        members = [c for c in candidates if (c.model, c.rf_trees) == (model, rf_trees)]
        try:
            cfg = members[0].propensity_config(fit_seed)
            fitted = _fit_model(design.features, design.treatment, replace(cfg, use_logit_link=False))
            scores = fitted.predict_proba(design.features)
        except MatchforgeError as exc:
            for c in members:
                out[c.pipeline_id] = (None, str(exc))
            continue
        for c in members:
            try:
                values = clip_and_transform(scores, c.propensity_config(fit_seed))
                est = matched_ate_from_values(design, values, c.matcher, fit_seed)
                out[c.pipeline_id] = (abs(est.ate), None)
            except MatchforgeError as exc:
                out[c.pipeline_id] = (None, str(exc))
    return b, out


def run_pipeline(cfg: RunConfig) -> RunReport:
    """Evaluate every candidate on one task and apply all five strategies."""
    from .report import build_report, write_report

    dataset, synth_task = load_task(cfg)
    design = encode(dataset)
    reference, probs, larger_rows = task_reference(dataset, cfg.smd_agg)
    unadjusted_ate, unadjusted_smd = reference

    outcomes = [CandidateOutcome(spec=c) for c in cfg.candidates]
    by_id = {c.spec.pipeline_id: c for c in outcomes}

    # one CV pass and one full fit per distinct model; links share them
    folds = _stratified_folds(design.treatment, cfg.cv_folds, _derived_seed(cfg.seed, cfg.cv_folds, 3))
    model_scores: dict[tuple[str, int], np.ndarray] = {}
    model_errors: dict[tuple[str, int], str] = {}
    model_cv: dict[tuple[str, int], list] = {}
    for mi, key in enumerate(_model_keys(cfg.candidates)):
        model, rf_trees = key
        base = PropensityConfig(
            model=model, rf_trees=rf_trees, cv_folds=cfg.cv_folds,
            seed=_derived_seed(cfg.seed, mi, 1000001),
        )
        fold_rows = []
        for fi, test in enumerate(folds):
            train = np.setdiff1d(np.arange(design.n_rows), test, assume_unique=True)
            try:
                fit_cfg = replace(base, seed=_derived_seed(cfg.seed, mi, fi))
                fold_model = _fit_model(design.features[train], design.treatment[train], fit_cfg)
                fold_rows.append((test, fold_model.predict_proba(design.features[test])))
            except (MatchforgeError, np.linalg.LinAlgError) as exc:
                fold_rows.append(str(exc))
        model_cv[key] = fold_rows
        try:
            fitted = _fit_model(design.features, design.treatment, base)
            model_scores[key] = fitted.predict_proba(design.features)
        except (MatchforgeError, np.linalg.LinAlgError) as exc:
            model_errors[key] = str(exc)

    matching_values: dict[str, np.ndarray] = {}
    for c in cfg.candidates:
        oc = by_id[c.pipeline_id]
        key = (c.model, c.rf_trees)
        link_cfg = c.propensity_config(cfg.seed, cfg.cv_folds)
        for row in model_cv[key]:
            if isinstance(row, str):
                oc.cv_fold_diags.append({"error": row})
            else:
                test, scores = row
                oc.cv_fold_diags.append(
                    diagnostics_for_scores(scores, design.treatment[test], link_cfg)
                )
        diags = [d for d in oc.cv_fold_diags if not isinstance(d, dict)]
        if diags:
            oc.cv_mean = _mean_diagnostics(diags)
        if key in model_errors:
            oc.status = "fit-failed"
            oc.error = model_errors[key]
            continue
        scores = model_scores[key]
        oc.fit_diags = diagnostics_for_scores(scores, design.treatment, link_cfg)
        oc.overlap_valid = oc.fit_diags.valid
        matching_values[c.pipeline_id] = clip_and_transform(scores, link_cfg)

    for c in cfg.candidates:
        oc = by_id[c.pipeline_id]
        if oc.status != "ok":
            continue
        try:
            est = matched_ate_from_values(design, matching_values[c.pipeline_id], c.matcher, cfg.seed)
            oc.matched_ate = est.ate
            oc.balance = balance_report(est.pop_large, est.pop_small, cfg.smd_agg)
            oc.match_dict = {
                "method": est.result.method,
                "total_distance": est.result.total_distance,
                "pairs": est.pair_rows(design),
            }
        except MatchforgeError as exc:
            oc.status = "matching-failed"
            oc.error = str(exc)

    active = [c for c in cfg.candidates if by_id[c.pipeline_id].status == "ok"]
    if active and cfg.n_bootstraps > 0:
        payloads = [
            (dataset, larger_rows, reference, probs, b, cfg.seed, cfg.climb, cfg.smd_agg, tuple(active))
            for b in range(1, cfg.n_bootstraps + 1)
        ]
        results = run_ordered(_bootstrap_eval, payloads, cfg.workers)
        for c in active:
            oc = by_id[c.pipeline_id]
            for b, per_candidate in results:
                value, err = per_candidate[c.pipeline_id]
                if value is None:
                    oc.a2a_failures.append((b, err))
                else:
                    oc.a2a_values.append((b, value))
            if len(oc.a2a_failures) > cfg.n_bootstraps / 2:
                oc.status = "a2a-failed"
                oc.error = f"{len(oc.a2a_failures)} of {cfg.n_bootstraps} bootstraps failed"
            elif oc.a2a_values:
                oc.a2a_mean = float(np.mean([v for _, v in oc.a2a_values]))

    evaluations = []
    for c in cfg.candidates:
        oc = by_id[c.pipeline_id]
        if oc.status != "ok" or oc.a2a_mean is None:
            continue
        smd = oc.balance.scalar()
        evaluations.append(
            CandidateEvaluation(
                pipeline_id=c.pipeline_id,
                smd=float(abs(smd)),
                a2a=oc.a2a_mean,
                ate=oc.matched_ate,
                smd_valid=bool(smd < 0.10),
                overlap_valid=oc.overlap_valid,
            )
        )
    eligible = [e for e in evaluations if e.overlap_valid]
    selections = run_strategies(eligible, cfg.eps, cfg.min_pts)

    n_failed = sum(1 for oc in outcomes if oc.status != "ok")
    exit_code = 0 if n_failed == 0 else (2 if n_failed < len(outcomes) else 3)

    report = build_report(
        cfg=cfg,
        dataset=dataset,
        synth_task=synth_task,
        unadjusted_ate=unadjusted_ate,
        unadjusted_smd=unadjusted_smd,
        outcomes=outcomes,
        evaluations=evaluations,
        selections=selections,
        exit_code=exit_code,
    )
    run = RunReport(
        report=report,
        outcomes=outcomes,
        evaluations=evaluations,
        selections=selections,
        exit_code=exit_code,
        unadjusted_ate=unadjusted_ate,
        unadjusted_smd=unadjusted_smd,
        true_ate=synth_task.true_ate if synth_task else None,
        dataset=dataset,
        synth_task=synth_task,
    )
    if cfg.out_dir:
        write_report(run, cfg.out_dir)
    return run
