"""Propensity models, score transforms, diagnostics, and CV model selection."""

import math

import numpy as np
import pytest

from conftest import build_dataset
from matchforge.errors import ConvergenceError, NoModelError, SingleArmError
from matchforge.propensity import (
    PropensityConfig,
    _fit_logistic,
    _make_chunks,
    _stratified_folds,
    accuracy_score,
    clip_and_transform,
    cross_validate,
    diagnostics_for_scores,
    extremes_ratio,
    fit_clr,
    fit_lr,
    fit_propensity,
    fit_rf,
    overlap_coefficient,
    select_model,
)
from matchforge.tabular import encode
from oracles import gd_logistic


def _design(x, t, y=None):
    n = len(t)
    cont = {f"x{j + 1}": np.asarray(x)[:, j] for j in range(np.asarray(x).shape[1])}
    return encode(build_dataset(t, y if y is not None else np.zeros(n), continuous=cont))


def _separable_design(n=60):
    x = np.concatenate([np.linspace(-3, -0.5, n // 2), np.linspace(0.5, 3, n // 2)])
    t = (x > 0).astype(float)
    return _design(x.reshape(-1, 1), t)


# -- transforms and diagnostics ----------------------------------------------


def test_clip_and_transform_values():
    cfg = PropensityConfig("LR")
    assert clip_and_transform(np.array([0.01]), cfg)[0] == pytest.approx(0.05, abs=1e-12)
    logit_cfg = PropensityConfig("LR", use_logit_link=True)
    out = clip_and_transform(np.array([0.5, 0.95, 0.99]), logit_cfg)
    assert out[0] == pytest.approx(0.0, abs=1e-12)
    assert out[1] == pytest.approx(math.log(19.0), abs=1e-10)
    assert out[2] == pytest.approx(math.log(19.0), abs=1e-10)  # clipped first


def test_accuracy_score_examples():
    t = np.array([0, 0, 1, 1])
    assert accuracy_score(np.array([0.0, 0.0, 1.0, 1.0]), t) == 2.0
    assert accuracy_score(np.array([0.5, 0.5, 0.5, 0.5]), t) == 1.0
    assert accuracy_score(np.array([1.0, 1.0, 0.0, 0.0]), t) == 0.0


def test_extremes_ratio_examples():
    assert extremes_ratio(np.array([0.1, 0.5, 0.9])) == 0.0
    assert extremes_ratio(np.array([0.01, 0.5, 0.99, 0.5])) == 0.5
    assert extremes_ratio(np.array([0.05, 0.95])) == 0.0  # closed interval


def test_overlap_examples():
    s = np.array([0.12, 0.34, 0.51, 0.77])
    assert overlap_coefficient(s, s.copy()) == pytest.approx(1.0, abs=1e-12)
    assert overlap_coefficient(np.array([0.1, 0.1]), np.array([0.9, 0.9])) == 0.0
    x0 = np.array([0.1, 0.1, 0.3, 0.3])
    x1 = np.array([0.3, 0.3, 0.5, 0.5])
    assert overlap_coefficient(x0, x1) == pytest.approx(0.5, abs=1e-12)


def test_overlap_symmetric_and_bounded(rng):
    for _ in range(25):
        a = rng.random(int(rng.integers(1, 40)))
        b = rng.random(int(rng.integers(1, 40)))
        ov = overlap_coefficient(a, b)
        assert ov == overlap_coefficient(b, a)
        assert 0.0 <= ov <= 1.0


def test_diagnostics_composite_identity():
    cfg = PropensityConfig("LR")
    scores = np.array([0.2, 0.3, 0.6, 0.7])
    t = np.array([0, 0, 1, 1])
    diag = diagnostics_for_scores(scores, t, cfg)
    assert diag.composite == pytest.approx(
        diag.accuracy + (1.0 - diag.extremes_ratio) + diag.overlap, abs=1e-12
    )
    assert diag.valid == (diag.overlap >= 0.5)


def test_diagnostics_overlap_uses_link_scale():
    # raw scores share strata; logits of the same scores spread far apart
    cfg_raw = PropensityConfig("LR")
    cfg_logit = PropensityConfig("LR", use_logit_link=True)
    scores = np.array([0.08, 0.12, 0.88, 0.92])
    t = np.array([0, 1, 0, 1])
    raw = diagnostics_for_scores(scores, t, cfg_raw)
    logit = diagnostics_for_scores(scores, t, cfg_logit)
    assert raw.overlap > logit.overlap


# -- LR -----------------------------------------------------------------------


def test_lr_separable_accuracy_two():
    m = _separable_design()
    fit = fit_lr(m, PropensityConfig("LR"))
    assert fit.diagnostics.accuracy == 2.0
    assert np.all(fit.clipped >= 0.05) and np.all(fit.clipped <= 0.95)
    assert np.all(np.isfinite(fit.matching_value))


def test_lr_uninformative_features_give_half(rng):
    x = np.zeros((40, 1))
    t = rng.integers(0, 2, size=40).astype(float)
    t[:3] = [0, 1, 0]  # keep both arms present
    fit = fit_lr(_design(x, t), PropensityConfig("LR"))
    assert np.allclose(fit.scores, 0.5, atol=1e-6)


def test_lr_imbalanced_arms_match_reweighted_oracle(rng):
    # 90/10 arms; the class-balanced Newton fit must land on the optimum of
    # the same reweighted likelihood found by plain gradient descent
    n = 100
    x = rng.normal(size=(n, 1))
    z = 1.4 * x[:, 0] - 2.2
    t = (rng.random(n) < 1.0 / (1.0 + np.exp(-z))).astype(float)
    while t.sum() < 5 or t.sum() > 20:
        t = (rng.random(n) < 1.0 / (1.0 + np.exp(-z))).astype(float)
    m = _design(x, t)
    fit = fit_lr(m, PropensityConfig("LR"))
    assert abs(float(fit.scores.mean()) - 0.5) < 0.08

    w = np.where(t == 1, n / (2.0 * t.sum()), n / (2.0 * (n - t.sum())))
    coef, intercept = gd_logistic(m.features, t, w, lr=1.0, iters=120000)
    oracle_scores = 1.0 / (1.0 + np.exp(-(m.features @ coef + intercept)))
    assert np.max(np.abs(oracle_scores - fit.scores)) < 1e-5


def test_lr_single_arm_rejected():
    x = np.ones((6, 1))
    with pytest.raises(SingleArmError):
        fit_lr(_design(x, np.ones(6)), PropensityConfig("LR"))


def test_logistic_convergence_error():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(50, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(float)
    with pytest.raises(ConvergenceError) as err:
        _fit_logistic(X, y, np.ones(50), max_iter=1)
    assert err.value.iterations == 1


# -- CLR ----------------------------------------------------------------------


def test_make_chunks_sizes():
    rng = np.random.default_rng(0)
    chunks = _make_chunks(np.arange(100), 30, rng)
    assert [len(c) for c in chunks] == [30, 30, 30, 10]
    assert sorted(np.concatenate(chunks).tolist()) == list(range(100))


def test_clr_single_chunk_is_lr_bitwise():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(40, 2))
    t = np.array([0, 1] * 20, dtype=float)  # equal arms -> one chunk
    m = _design(x, t)
    cfg = PropensityConfig("CLR", seed=7)
    clr = fit_clr(m, cfg)
    lr = fit_lr(m, PropensityConfig("LR", seed=7))
    assert np.array_equal(clr.scores, lr.scores)


def test_clr_duplicated_arms_give_half(rng):
    x = rng.normal(size=(30, 2))
    xx = np.vstack([x, x])
    t = np.concatenate([np.zeros(30), np.ones(30)])
    fit = fit_clr(_design(xx, t), PropensityConfig("CLR"))
    assert np.allclose(fit.scores, 0.5, atol=1e-4)


def test_clr_multi_chunk_scores_average(rng):
    x = rng.normal(size=(90, 2))
    t = np.concatenate([np.zeros(70), np.ones(20)])
    fit = fit_clr(_design(x, t), PropensityConfig("CLR", seed=3))
    assert len(fit.model.models) == math.ceil(70 / 20)
    stack = np.stack([m.predict_proba(_design(x, t).features) for m in fit.model.models])
    assert np.allclose(stack.mean(axis=0), fit.scores, atol=1e-12)


# -- RF -----------------------------------------------------------------------


def _xor_data(n=400, seed=2):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    t = ((x[:, 0] > 0) ^ (x[:, 1] > 0)).astype(float)
    return x, t


def test_rf_beats_lr_on_xor():
    x, t = _xor_data()
    m = _design(x, t)
    rf = fit_rf(m, PropensityConfig("RF", rf_trees=50, seed=0))
    lr = fit_lr(m, PropensityConfig("LR", seed=0))
    assert rf.diagnostics.accuracy > lr.diagnostics.accuracy


def test_rf_single_tree_has_two_score_levels():
    m = _separable_design(40)
    fit = fit_rf(m, PropensityConfig("RF", rf_trees=1, seed=0))
    assert len(np.unique(fit.scores)) <= 2


def test_rf_constant_features_give_prevalence(rng):
    x = np.zeros((100, 2))
    t = np.concatenate([np.zeros(70), np.ones(30)])
    fit = fit_rf(_design(x, t), PropensityConfig("RF", rf_trees=20, seed=1))
    assert np.allclose(fit.scores, 0.3, atol=0.05)


def test_fit_propensity_dispatch(rng):
    x = rng.normal(size=(30, 2))
    t = np.array([0, 1] * 15, dtype=float)
    m = _design(x, t)
    for model in ("LR", "CLR", "RF"):
        fit = fit_propensity(m, PropensityConfig(model, rf_trees=5))
        assert np.all((fit.scores >= 0) & (fit.scores <= 1))


# -- CV selection --------------------------------------------------------------


def test_stratified_folds_partition(rng):
    t = (rng.random(53) < 0.3).astype(int)
    folds = _stratified_folds(t, 5, seed=9)
    joined = np.concatenate(folds)
    assert sorted(joined.tolist()) == list(range(53))
    for f in folds:
        assert (t[f] == 1).any() and (t[f] == 0).any()


def test_cross_validate_fold_count(rng):
    x = rng.normal(size=(60, 2))
    t = (x[:, 0] + rng.normal(scale=0.5, size=60) > 0).astype(float)
    cv = cross_validate(_design(x, t), PropensityConfig("LR", cv_folds=4))
    assert len(cv.fold_scores) == 4
    assert cv.mean is not None
    assert cv.mean.composite == pytest.approx(
        cv.mean.accuracy + (1 - cv.mean.extremes_ratio) + cv.mean.overlap, abs=1e-12
    )


def test_select_model_single_candidate(rng):
    x = rng.normal(size=(40, 1))
    t = (x[:, 0] > 0).astype(float)
    cfg = PropensityConfig("LR")
    best, details = select_model(_design(x, t), [cfg])
    assert best is cfg and len(details) == 1


def test_select_model_empty_rejected(rng):
    x = rng.normal(size=(10, 1))
    with pytest.raises(NoModelError):
        select_model(_design(x, np.array([0, 1] * 5, dtype=float)), [])


def test_select_model_prefers_larger_forest_on_nonlinear_data():
    # Multiplicative interaction buried in 6 noise dimensions: 10 trees sit
    # near chance while 200 trees recover enough signal that the accuracy
    # gain outweighs the overlap cost.
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1000, 8))
    p = 1.0 / (1.0 + np.exp(-2.5 * x[:, 0] * x[:, 1]))
    t = (rng.random(1000) < p).astype(float)
    m = _design(x, t)
    small = PropensityConfig("RF", rf_trees=10, seed=0)
    large = PropensityConfig("RF", rf_trees=200, seed=0)
    best, details = select_model(m, [small, large])
    assert best is large
    assert details[1].mean.composite > details[0].mean.composite


def test_select_model_deterministic(rng):
    x = rng.normal(size=(80, 2))
    t = (x[:, 0] > 0.2).astype(float)
    m = _design(x, t)
    cands = [PropensityConfig("LR", seed=5), PropensityConfig("CLR", seed=5)]
    best1, d1 = select_model(m, cands)
    best2, d2 = select_model(m, cands)
    assert best1 is best2
    assert [d.mean.composite for d in d1] == [d.mean.composite for d in d2]
