"""Propensity models (LR, chunked LR, calibrated RF) and their diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.tree import DecisionTreeClassifier

from .errors import (
    ConvergenceError,
    MatchforgeError,
    NoModelError,
    SingleArmError,
    ValidationError,
)
from .tabular import DesignMatrix

MODELS = ("LR", "CLR", "RF")


@dataclass(frozen=True)
class PropensityConfig:
    """Settings for one propensity estimator.

    Parameters
    ----------
    model : str
        "LR", "CLR" (chunked LR) or "RF" (Platt-calibrated random forest).
    use_logit_link : bool
        Match (and measure overlap) on logit(score) instead of the score.
    clip_bounds : tuple
        Scores are clamped into this closed interval before matching.
    rf_trees : int
        Forest size, RF only.
    cv_folds : int
        Folds for cross-validated model selection.
    seed : int
        Root seed for every random draw this config makes.
    """

    model: str
    use_logit_link: bool = False
    clip_bounds: tuple[float, float] = (0.05, 0.95)
    rf_trees: int = 100
    cv_folds: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValidationError(f"unknown propensity model {self.model!r}")
        low, high = self.clip_bounds
        if not (0.0 < low < high < 1.0):
            raise ValidationError("clip bounds must satisfy 0 < low < high < 1")
        if self.cv_folds < 2:
            raise ValidationError("cv_folds must be >= 2")
        if self.rf_trees < 1:
            raise ValidationError("rf_trees must be >= 1")


@dataclass(frozen=True)
class DiagnosticScores:
    accuracy: float  # sum of per-arm recalls, in [0, 2]
    extremes_ratio: float
    overlap: float
    composite: float
    valid: bool  # overlap >= 0.5

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "extremes_ratio": self.extremes_ratio,
            "overlap": self.overlap,
            "composite": self.composite,
            "valid": self.valid,
        }


@dataclass(frozen=True)
class PropensityFit:
    scores: np.ndarray  # pre-clip probabilities
    clipped: np.ndarray
    matching_value: np.ndarray
    diagnostics: DiagnosticScores
    model: object  # fitted predictor, exposes predict_proba(X)


# -- numerics ----------------------------------------------------------------


def _sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class _LogisticModel:
    """Plain binary logistic regression fit by damped Newton iterations."""

    def __init__(self, coef: np.ndarray, intercept: float, n_iter: int) -> None:
        self.coef = coef
        self.intercept = intercept
        self.n_iter = n_iter

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(X @ self.coef + self.intercept)


def _penalized_nll(z: np.ndarray, y: np.ndarray, w: np.ndarray, beta: np.ndarray, ridge: float) -> float:
    return float(np.sum(w * (np.logaddexp(0.0, z) - y * z)) + 0.5 * ridge * beta @ beta)


def _fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray,
    ridge: float = 1e-6,
    max_iter: int = 200,
    tol: float = 1e-8,
) -> _LogisticModel:
    n, p = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    w = np.asarray(sample_weight, dtype=float)
    beta = np.zeros(p + 1)
    z = Xa @ beta
    nll = _penalized_nll(z, y, w, beta, ridge)
    for it in range(1, max_iter + 1):
        prob = _sigmoid(z)
        grad = Xa.T @ (w * (prob - y)) + ridge * beta
        curv = w * prob * (1.0 - prob)
        hess = Xa.T @ (Xa * curv[:, None]) + ridge * np.eye(p + 1)
        step = np.linalg.solve(hess, grad)
        # halve until the penalized objective stops increasing
        for _ in range(50):
            cand = beta - step
            z_cand = Xa @ cand
            nll_cand = _penalized_nll(z_cand, y, w, cand, ridge)
            if nll_cand <= nll + 1e-12:
                break
            step = step / 2.0
        moved = float(np.max(np.abs(step)))
        beta, z, nll = cand, z_cand, nll_cand
        if moved < tol:
            return _LogisticModel(beta[:p].copy(), float(beta[p]), it)
    raise ConvergenceError(f"logistic regression did not converge in {max_iter} iterations", max_iter)


def _balanced_weights(treatment: np.ndarray) -> np.ndarray:
    n = len(treatment)
    n1 = int(treatment.sum())
    n0 = n - n1
    if n0 == 0 or n1 == 0:
        raise SingleArmError("both treatment arms are required to fit a propensity model")
    w = np.where(treatment == 1, n / (2.0 * n1), n / (2.0 * n0))
    return w


class _ChunkedLogistic:
    def __init__(self, models: list[_LogisticModel]) -> None:
        self.models = models

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        stack = np.stack([m.predict_proba(X) for m in self.models])
        return stack.mean(axis=0)


class _PlattForest:
    def __init__(self, trees: list[DecisionTreeClassifier], slope: float, offset: float) -> None:
        self.trees = trees
        self.slope = slope
        self.offset = offset

    def vote_fractions(self, X: np.ndarray) -> np.ndarray:
        votes = np.stack([tree.predict(X).astype(float) for tree in self.trees])
        return votes.mean(axis=0)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.slope * self.vote_fractions(X) + self.offset)


# -- fitting -----------------------------------------------------------------


def _fit_lr_model(features: np.ndarray, treatment: np.ndarray, cfg: PropensityConfig) -> _LogisticModel:
    w = _balanced_weights(treatment)
    return _fit_logistic(features, treatment.astype(float), w)


def _make_chunks(large_positions: np.ndarray, n_small: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(large_positions)
    n_chunks = math.ceil(len(large_positions) / n_small)
    return [perm[i * n_small : (i + 1) * n_small] for i in range(n_chunks)]


def _fit_clr_model(features: np.ndarray, treatment: np.ndarray, cfg: PropensityConfig) -> _ChunkedLogistic:
    pos0 = np.flatnonzero(treatment == 0)
    pos1 = np.flatnonzero(treatment == 1)
    if len(pos0) == 0 or len(pos1) == 0:
        raise SingleArmError("both treatment arms are required to fit a propensity model")
    large, small = (pos0, pos1) if len(pos0) >= len(pos1) else (pos1, pos0)
    if len(small) < 2:
        raise ValidationError("chunked LR needs the smaller arm to have >= 2 samples")
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1)))
    models = []
    for chunk in _make_chunks(large, len(small), rng):
        subset = np.sort(np.concatenate([chunk, small]))
        sub_t = treatment[subset]
        w = _balanced_weights(sub_t)
        models.append(_fit_logistic(features[subset], sub_t.astype(float), w))
    return _ChunkedLogistic(models)


def _fit_rf_model(features: np.ndarray, treatment: np.ndarray, cfg: PropensityConfig) -> _PlattForest:
    if len(np.unique(treatment)) < 2:
        raise SingleArmError("both treatment arms are required to fit a propensity model")
    n = len(treatment)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2)))
    trees: list[DecisionTreeClassifier] = []
    inbag = np.zeros((cfg.rf_trees, n), dtype=bool)
    votes = np.zeros((cfg.rf_trees, n))
    for t in range(cfg.rf_trees):
        idx = rng.integers(0, n, size=n)
        tree_seed = int(rng.integers(0, 2**31 - 1))
        tree = DecisionTreeClassifier(
            criterion="gini",
            max_features="sqrt",
            min_samples_leaf=5,
            random_state=tree_seed,
        )
        tree.fit(features[idx], treatment[idx])
        trees.append(tree)
        inbag[t, idx] = True
        votes[t] = tree.predict(features).astype(float)

    full_frac = votes.mean(axis=0)
    oob = ~inbag
    oob_counts = oob.sum(axis=0)
    with np.errstate(invalid="ignore"):
        oob_frac = np.where(oob_counts > 0, (votes * oob).sum(axis=0) / np.maximum(oob_counts, 1), full_frac)
    platt = _fit_logistic(
        oob_frac.reshape(-1, 1), treatment.astype(float), np.ones(n)
    )
    return _PlattForest(trees, float(platt.coef[0]), platt.intercept)


_FITTERS = {"LR": _fit_lr_model, "CLR": _fit_clr_model, "RF": _fit_rf_model}


def _fit_model(features: np.ndarray, treatment: np.ndarray, cfg: PropensityConfig):
    return _FITTERS[cfg.model](features, treatment, cfg)


# -- scores and diagnostics --------------------------------------------------


def clip_and_transform(scores: np.ndarray, cfg: PropensityConfig) -> np.ndarray:
    """Clamp scores into cfg.clip_bounds, then apply the logit link if set."""
    clipped = np.clip(np.asarray(scores, dtype=float), cfg.clip_bounds[0], cfg.clip_bounds[1])
    if cfg.use_logit_link:
        return np.log(clipped / (1.0 - clipped))
    return clipped


def _link_values(scores: np.ndarray, cfg: PropensityConfig) -> np.ndarray:
    # pre-clip values on the matching scale; logit may be +-inf at 0/1,
    # which simply lands outside every overlap stratum
    if not cfg.use_logit_link:
        return np.asarray(scores, dtype=float)
    s = np.asarray(scores, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(s / (1.0 - s))


def accuracy_score(scores: np.ndarray, treatment: np.ndarray) -> float:
    """Sum of the two class recalls at threshold 0.5 (treated counted at >=)."""
    s = np.asarray(scores, dtype=float)
    t = np.asarray(treatment)
    n0 = int(np.sum(t == 0))
    n1 = int(np.sum(t == 1))
    if n0 == 0 or n1 == 0:
        raise SingleArmError("accuracy_score needs both arms")
    r0 = np.sum(s[t == 0] < 0.5) / n0
    r1 = np.sum(s[t == 1] >= 0.5) / n1
    return float(r0 + r1)


def extremes_ratio(scores: np.ndarray, clip_bounds: tuple[float, float] = (0.05, 0.95)) -> float:
    """Fraction of scores outside the closed clip interval."""
    s = np.asarray(scores, dtype=float)
    return float(np.mean((s < clip_bounds[0]) | (s > clip_bounds[1])))


def _strata_histogram(values: np.ndarray) -> np.ndarray:
    # nine 0.1-wide strata covering [0.05, 0.95]; the last one is closed so
    # every in-range value lands in exactly one bin
    v = np.asarray(values, dtype=float)
    in_range = (v >= 0.05) & (v <= 0.95)
    idx = np.clip(((v[in_range] - 0.05) / 0.1).astype(int), 0, 8)
    counts = np.bincount(idx, minlength=9).astype(float)
    return counts / len(v)


def overlap_coefficient(scores0: np.ndarray, scores1: np.ndarray) -> float:
    """Sum over strata of the min of the two normalized histograms."""
    if len(scores0) == 0 or len(scores1) == 0:
        raise ValidationError("overlap_coefficient requires non-empty score sets")
    h0 = _strata_histogram(scores0)
    h1 = _strata_histogram(scores1)
    return float(np.minimum(h0, h1).sum())


def diagnostics_for_scores(
    scores: np.ndarray, treatment: np.ndarray, cfg: PropensityConfig
) -> DiagnosticScores:
    """Accuracy/extremes on raw probabilities, overlap on the matching scale."""
    acc = accuracy_score(scores, treatment)
    ext = extremes_ratio(scores, cfg.clip_bounds)
    link = _link_values(scores, cfg)
    t = np.asarray(treatment)
    ov = overlap_coefficient(link[t == 0], link[t == 1])
    return DiagnosticScores(
        accuracy=acc,
        extremes_ratio=ext,
        overlap=ov,
        composite=acc + (1.0 - ext) + ov,
        valid=bool(ov >= 0.5),
    )


def _finalize(model, m: DesignMatrix, cfg: PropensityConfig) -> PropensityFit:
    scores = model.predict_proba(m.features)
    return PropensityFit(
        scores=scores,
        clipped=np.clip(scores, cfg.clip_bounds[0], cfg.clip_bounds[1]),
        matching_value=clip_and_transform(scores, cfg),
        diagnostics=diagnostics_for_scores(scores, m.treatment, cfg),
        model=model,
    )


def fit_lr(m: DesignMatrix, cfg: PropensityConfig) -> PropensityFit:
    """Class-balanced logistic regression of treatment on features."""
    return _finalize(_fit_lr_model(m.features, m.treatment, cfg), m, cfg)


def fit_clr(m: DesignMatrix, cfg: PropensityConfig) -> PropensityFit:
    """Chunked LR: the larger arm is split into smaller-arm-sized chunks,
    one LR per (chunk + smaller arm), scores averaged over chunk models."""
    return _finalize(_fit_clr_model(m.features, m.treatment, cfg), m, cfg)


def fit_rf(m: DesignMatrix, cfg: PropensityConfig) -> PropensityFit:
    """Random forest with hard per-tree votes, Platt-calibrated on the
    out-of-bag vote fractions."""
    return _finalize(_fit_rf_model(m.features, m.treatment, cfg), m, cfg)


def fit_propensity(m: DesignMatrix, cfg: PropensityConfig) -> PropensityFit:
    return {"LR": fit_lr, "CLR": fit_clr, "RF": fit_rf}[cfg.model](m, cfg)


# -- cross-validated model selection ----------------------------------------


@dataclass
class CandidateCV:
    """Per-fold and fold-mean diagnostics for one candidate config."""

    config: PropensityConfig
    fold_scores: list = field(default_factory=list)  # DiagnosticScores | None
    fold_errors: list = field(default_factory=list)  # str | None
    mean: DiagnosticScores | None = None
    error: str | None = None


def _stratified_folds(treatment: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    folds: list[list[np.ndarray]] = [[] for _ in range(k)]
    for arm in (0, 1):
        pos = np.flatnonzero(treatment == arm)
        pos = pos[rng.permutation(len(pos))]
        for f in range(k):
            folds[f].append(pos[f::k])
    return [np.sort(np.concatenate(parts)) for parts in folds]


def _derived_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def _mean_diagnostics(scores: list[DiagnosticScores]) -> DiagnosticScores:
    acc = float(np.mean([s.accuracy for s in scores]))
    ext = float(np.mean([s.extremes_ratio for s in scores]))
    ov = float(np.mean([s.overlap for s in scores]))
    return DiagnosticScores(
        accuracy=acc,
        extremes_ratio=ext,
        overlap=ov,
        composite=acc + (1.0 - ext) + ov,
        valid=bool(ov >= 0.5),
    )


def cross_validate(m: DesignMatrix, cfg: PropensityConfig, candidate_index: int = 0) -> CandidateCV:
    """Stratified k-fold CV of one config; diagnostics on held-out folds."""
    out = CandidateCV(config=cfg)
    folds = _stratified_folds(m.treatment, cfg.cv_folds, _derived_seed(cfg.seed, cfg.cv_folds, 3))
    all_rows = np.arange(m.n_rows)
    for fi, test in enumerate(folds):
        train = np.setdiff1d(all_rows, test, assume_unique=True)
        try:
            if len(test) == 0:
                raise ValidationError("empty CV fold")
            fit_cfg = replace(cfg, seed=_derived_seed(cfg.seed, candidate_index, fi))
            model = _fit_model(m.features[train], m.treatment[train], fit_cfg)
            test_scores = model.predict_proba(m.features[test])
            out.fold_scores.append(diagnostics_for_scores(test_scores, m.treatment[test], cfg))
            out.fold_errors.append(None)
        except (MatchforgeError, np.linalg.LinAlgError) as exc:
            out.fold_scores.append(None)
            out.fold_errors.append(str(exc))
    ok = [s for s in out.fold_scores if s is not None]
    if ok:
        out.mean = _mean_diagnostics(ok)
    else:
        out.error = "; ".join(e for e in out.fold_errors if e)
    return out


def select_model(
    m: DesignMatrix, candidates: list[PropensityConfig]
) -> tuple[PropensityConfig, list[CandidateCV]]:
    """Pick the candidate with the best fold-mean composite score.

    Ties go to the earliest candidate. Raises NoModelError when every
    candidate fails in every fold.
    """
    if not candidates:
        raise NoModelError("no candidate configurations given")
    details = [cross_validate(m, cfg, ci) for ci, cfg in enumerate(candidates)]
    composites = [d.mean.composite if d.mean is not None else -np.inf for d in details]
    best = int(np.argmax(composites))
    if composites[best] == -np.inf:
        raise NoModelError("all candidate propensity models failed cross-validation")
    return candidates[best], details
