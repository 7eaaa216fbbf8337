"""Effect and balance metrics: ATE, Cohen's D, Cramer's V, Kendall's tau."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfiniteEffectError, UndefinedTauError, ValidationError
from .tabular import Population

SMD_VALID_THRESHOLD = 0.10


def ate(y0: np.ndarray, y1: np.ndarray) -> float:
    """Average treatment effect: mean(y1) - mean(y0)."""
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    if len(y0) == 0 or len(y1) == 0:
        raise ValidationError("ate requires two non-empty outcome vectors")
    return float(y1.mean() - y0.mean())


def cohens_d(x0: np.ndarray, x1: np.ndarray) -> float:
    """Standardized mean difference (mu0 - mu1) / pooled_sd.

    Pooled variance uses (N-1)-denominator per-group variances:
    ((N0-1)*s0^2 + (N1-1)*s1^2) / (N0 + N1 - 2).
    """
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    n0, n1 = len(x0), len(x1)
    if n0 + n1 < 3 or n0 == 0 or n1 == 0:
        raise ValidationError("cohens_d needs N0+N1 >= 3 with both groups non-empty")
    s0 = x0.var(ddof=1) if n0 > 1 else 0.0
    s1 = x1.var(ddof=1) if n1 > 1 else 0.0
    pooled = ((n0 - 1) * s0 + (n1 - 1) * s1) / (n0 + n1 - 2)
    diff = x0.mean() - x1.mean()
    if pooled == 0.0:
        if diff == 0.0:
            return 0.0
        raise InfiniteEffectError("zero pooled variance with unequal means")
    return float(diff / math.sqrt(pooled))


def cramers_v(x0: np.ndarray, x1: np.ndarray) -> float:
    """Chi-square effect size for a 2 x c population-by-level table.

    No Yates correction. A single pooled level carries no association and
    returns 0.
    """
    x0 = np.asarray(x0).astype(str)
    x1 = np.asarray(x1).astype(str)
    if len(x0) == 0 or len(x1) == 0:
        raise ValidationError("cramers_v requires two non-empty vectors")
    levels = np.unique(np.concatenate([x0, x1]))
    if len(levels) < 2:
        return 0.0
    table = np.zeros((2, len(levels)))
    for j, level in enumerate(levels):
        table[0, j] = np.sum(x0 == level)
        table[1, j] = np.sum(x1 == level)
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    with np.errstate(divide="ignore", invalid="ignore"):
        cells = np.where(expected > 0, (table - expected) ** 2 / expected, 0.0)
    chi2 = cells.sum()
    v = math.sqrt(chi2 / (n * min(len(levels) - 1, 1)))
    return float(min(v, 1.0))


@dataclass(frozen=True)
class FeatureBalance:
    name: str
    value: float
    kind: str  # "cohens_d" | "cramers_v"


@dataclass(frozen=True)
class BalanceReport:
    """Per-feature SMDs plus the scalar aggregate that drives validity."""

    per_feature: list[FeatureBalance]
    aggregate: float  # mean of absolute per-feature SMDs
    max_abs: float
    valid: bool
    agg: str = "mean"

    def scalar(self) -> float:
        return self.aggregate if self.agg == "mean" else self.max_abs


def balance_report(
    matched_large: Population,
    matched_small: Population,
    agg: str = "mean",
) -> BalanceReport:
    """Covariate balance between two matched populations.

    Cohen's D per continuous feature on raw (pre-standardization) values,
    Cramer's V per categorical column on labels. ``agg`` picks whether the
    mean or the max of absolute per-feature values decides validity.
    """
    if agg not in ("mean", "max"):
        raise ValidationError(f"unknown smd aggregate {agg!r}")
    ds = matched_large.dataset
    per_feature: list[FeatureBalance] = []
    for name in ds.covariate_names:
        kind = ds.schema_for(name).kind
        a = matched_large.column(name)
        b = matched_small.column(name)
        if kind == "continuous":
            per_feature.append(FeatureBalance(name, cohens_d(a, b), "cohens_d"))
        else:
            per_feature.append(FeatureBalance(name, cramers_v(a, b), "cramers_v"))
    magnitudes = np.array([abs(f.value) for f in per_feature])
    aggregate = float(magnitudes.mean()) if len(magnitudes) else 0.0
    max_abs = float(magnitudes.max()) if len(magnitudes) else 0.0
    chosen = aggregate if agg == "mean" else max_abs
    return BalanceReport(
        per_feature=per_feature,
        aggregate=aggregate,
        max_abs=max_abs,
        valid=bool(chosen < SMD_VALID_THRESHOLD),
        agg=agg,
    )


def kendall_tau(rank_a: np.ndarray, rank_b: np.ndarray) -> tuple[float, float]:
    """Kendall's tau-b with a tie-corrected normal-approximation p-value.

    Raises if either vector is fully tied (tau undefined).
    """
    a = np.asarray(rank_a, dtype=float)
    b = np.asarray(rank_b, dtype=float)
    if len(a) != len(b) or len(a) < 2:
        raise ValidationError("kendall_tau requires equal-length vectors, n >= 2")
    n = len(a)
    sa = np.sign(a[:, None] - a[None, :])
    sb = np.sign(b[:, None] - b[None, :])
    iu = np.triu_indices(n, k=1)
    prod = sa[iu] * sb[iu]
    concordant = int(np.sum(prod > 0))
    discordant = int(np.sum(prod < 0))
    s = concordant - discordant

    n0 = n * (n - 1) // 2
    _, ta = np.unique(a, return_counts=True)
    _, tb = np.unique(b, return_counts=True)
    n1 = int(np.sum(ta * (ta - 1)) // 2)
    n2 = int(np.sum(tb * (tb - 1)) // 2)
    if n1 == n0 or n2 == n0:
        raise UndefinedTauError("tau undefined: an input is fully tied")
    tau = s / math.sqrt((n0 - n1) * (n0 - n2))

    # tie-corrected variance of S (Kendall 1970 normal approximation)
    vt = np.sum(ta * (ta - 1) * (2 * ta + 5))
    vu = np.sum(tb * (tb - 1) * (2 * tb + 5))
    v0 = n * (n - 1) * (2 * n + 5)
    var_s = (v0 - vt - vu) / 18.0
    if n > 2:
        var_s += (
            np.sum(ta * (ta - 1) * (ta - 2)) * np.sum(tb * (tb - 1) * (tb - 2))
        ) / (9.0 * n * (n - 1) * (n - 2))
    var_s += (np.sum(ta * (ta - 1)) * np.sum(tb * (tb - 1))) / (2.0 * n * (n - 1))
    if var_s <= 0:
        return float(tau), 1.0
    z = s / math.sqrt(var_s)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return float(tau), float(p)
