"""Synthetic matching tasks with known per-sample treatment effects.

Features are i.i.d. standard normal. The first k features confound (drive
both selection and outcome); the rest split half into selection-only, half
into outcome-only, so k alone controls how biased the unadjusted ATE is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .tabular import ColumnSchema, Dataset

SELECTION_INTERCEPT = -1.0


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 3000
    n_features: int = 10
    n_confounders: int = 5
    effect_scale: float = 1.0
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.n_confounders <= self.n_features):
            raise ValidationError("n_confounders must lie in [0, n_features]")
        if self.n_samples < 4 or self.n_features < 1:
            raise ValidationError("need n_samples >= 4 and n_features >= 1")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")


@dataclass(frozen=True)
class SynthTask:
    dataset: Dataset
    true_ite: np.ndarray
    true_ate: float
    meta: dict


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def feature_roles(cfg: SynthConfig) -> tuple[list[int], list[int]]:
    """(selection feature indices, outcome feature indices)."""
    k = cfg.n_confounders
    rest = list(range(k, cfg.n_features))
    half = len(rest) // 2
    selection = list(range(k)) + rest[:half]
    outcome = list(range(k)) + rest[half:]
    return selection, outcome


def generate(cfg: SynthConfig) -> SynthTask:
    """Draw one synthetic task; fully determined by cfg.seed."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    n, d = cfg.n_samples, cfg.n_features
    X = rng.standard_normal((n, d))

    selection, outcome = feature_roles(cfg)
    # intercept -1 keeps the treated arm a clear minority (~29%), so 1:1
    # matching has large-arm slack to select from; scores stay mostly inside
    # the clip interval
    if selection:
        z = X[:, selection].sum(axis=1) / math.sqrt(len(selection)) + SELECTION_INTERCEPT
    else:
        z = np.full(n, SELECTION_INTERCEPT)
    propensity = 1.0 / (1.0 + np.exp(-z))
    T = (rng.random(n) < propensity).astype(float)

    if outcome:
        q = len(outcome)
        a, b, c, e, f = (outcome[i % q] for i in range(5))
        baseline = np.maximum(np.maximum(X[:, a] + X[:, b], X[:, c]), 0.0) + np.maximum(
            X[:, e] + X[:, f], 0.0
        )
        tau = cfg.effect_scale * (X[:, a] + _softplus(X[:, b]))
    else:
        baseline = np.zeros(n)
        tau = np.zeros(n)
    Y = baseline + T * tau + rng.normal(0.0, cfg.noise_sd, size=n)

    columns = [ColumnSchema(f"x{j + 1}", "continuous") for j in range(d)]
    columns.append(ColumnSchema("t", "treatment"))
    columns.append(ColumnSchema("y", "outcome"))
    values = {f"x{j + 1}": X[:, j] for j in range(d)}
    values["t"] = T
    values["y"] = Y
    meta = {
        "selection_features": [f"x{j + 1}" for j in selection],
        "outcome_features": [f"x{j + 1}" for j in outcome],
        "selection_weight": 1.0 / math.sqrt(len(selection)) if selection else 0.0,
        "selection_intercept": SELECTION_INTERCEPT,
        "n_confounders": cfg.n_confounders,
        "effect_scale": cfg.effect_scale,
        "noise_sd": cfg.noise_sd,
        "seed": cfg.seed,
    }
    return SynthTask(
        dataset=Dataset(columns, values),
        true_ite=tau,
        true_ate=float(tau.mean()),
        meta=meta,
    )


def oracle_error(task: SynthTask, estimated_ate: float) -> float:
    """Squared error of an ATE estimate against the generator's truth."""
    return float((estimated_ate - task.true_ate) ** 2)


def export_csv(task: SynthTask, data_path: str, schema_path: str) -> None:
    """Write the task as CSV + schema JSON, round-trippable by the CLI."""
    import csv
    import json

    ds = task.dataset
    names = [c.name for c in ds.columns]
    with open(data_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        cols = [ds.column(nm) for nm in names]
        for i in range(ds.n_rows):
            writer.writerow([repr(float(col[i])) for col in cols])
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump({c.name: c.kind for c in ds.columns}, fh, indent=2)
        fh.write("\n")
