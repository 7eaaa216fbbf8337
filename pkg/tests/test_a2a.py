"""Artificial-task construction and the A2A metric."""

from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import build_dataset
from matchforge.a2a import (
    HillClimbConfig,
    build_artificial_task,
    compute_a2a,
    make_artificial_task,
    partition_loss,
    task_reference,
)
from matchforge.errors import A2AUnavailableError, MatchforgeError, SingleArmError, ValidationError
from matchforge.metrics import ate
from matchforge.pipeline import PipelineSpec
from matchforge.synth import SynthConfig, generate
from matchforge.tabular import Population


def _candidate(x0, x1, y0, y1):
    """Two populations over one dataset with a single continuous feature."""
    n0, n1 = len(x0), len(x1)
    t = np.array([0.0] * n0 + [1.0] * n1)
    ds = build_dataset(
        t,
        np.concatenate([y0, y1]).astype(float),
        continuous={"x": np.concatenate([x0, x1]).astype(float)},
    )
    return Population(ds, np.arange(n0)), Population(ds, np.arange(n0, n0 + n1))


def _iid_population(n, seed):
    rng = np.random.default_rng(seed)
    ds = build_dataset(
        np.array([0.0, 1.0] * (n // 2)),
        rng.normal(size=n),
        continuous={"x": rng.normal(size=n)},
    )
    return Population(ds, np.arange(n))


# -- partition loss -----------------------------------------------------------


def test_partition_loss_hand_example():
    # reference (0.4, 0.2), candidate at ate 0.1 and smd 0.05:
    # (0.2 - 0.1)^2 + (0.1 - 0.05)^2 = 0.0125
    b = 0.05 * math.sqrt(2)  # mean shift giving |d| = 0.05 at pooled sd sqrt(2)
    cand = _candidate([-1.0, 1.0], [b - 1.0, b + 1.0], [0.0, 0.0], [0.1, 0.1])
    loss = partition_loss(cand, (0.4, 0.2))
    assert abs(loss - 0.0125) < 1e-12


def test_partition_loss_single_residual():
    cand = _candidate([-1.0, 1.0], [-1.0, 1.0], [0.0, 0.0], [0.1, 0.1])
    loss = partition_loss(cand, (0.4, 0.0))
    assert abs(loss - 0.01) < 1e-12


def test_partition_loss_zero_on_target():
    b = 0.1 * math.sqrt(2)
    cand = _candidate([-1.0, 1.0], [b - 1.0, b + 1.0], [0.0, 0.0], [0.2, 0.2])
    assert partition_loss(cand, (0.4, 0.2)) < 1e-20


def test_partition_loss_rejects_empty_subset():
    pop0, pop1 = _candidate([-1.0, 1.0], [0.0, 2.0], [0.0, 0.0], [1.0, 1.0])
    empty = Population(pop0.dataset, np.array([], dtype=int))
    with pytest.raises(ValidationError):
        partition_loss((pop0, empty), (0.4, 0.2))


# -- hill-climb config --------------------------------------------------------


def test_climb_config_validation():
    with pytest.raises(ValidationError):
        HillClimbConfig(max_iters=-1)
    with pytest.raises(ValidationError):
        HillClimbConfig(patience=0)
    with pytest.raises(ValidationError):
        HillClimbConfig(membership_probs=(0.3, 0.6))
    with pytest.raises(ValidationError):
        HillClimbConfig(membership_probs=(0.0, 1.0))


# -- build_artificial_task ----------------------------------------------------


def test_build_sizes_follow_arm_ratio():
    # arm ratio 60/40 applied to a 60-sample source: 36 and 24
    pop = _iid_population(60, seed=1)
    cfg = HillClimbConfig(max_iters=0, membership_probs=(0.6, 0.4))
    task = build_artificial_task(pop, pop.outcomes(), (0.0, 0.0), cfg)
    assert len(task.pseudo_control) == 36
    assert len(task.pseudo_treated) == 24


def test_build_size_clamped_to_keep_both_subsets():
    pop = _iid_population(4, seed=2)
    cfg = HillClimbConfig(max_iters=0, membership_probs=(0.9, 0.1))
    task = build_artificial_task(pop, pop.outcomes(), (0.0, 0.0), cfg)
    assert len(task.pseudo_control) == 3
    assert len(task.pseudo_treated) == 1


def test_build_k0_returns_initial_partition():
    pop = _iid_population(40, seed=3)
    cfg = HillClimbConfig(max_iters=0, seed=11)
    task = build_artificial_task(pop, pop.outcomes(), (0.3, 0.1), cfg)
    again = build_artificial_task(pop, pop.outcomes(), (0.3, 0.1), cfg)
    assert len(task.loss_trace) == 1
    assert abs(task.achieved_loss - task.loss_trace[0]) < 1e-9
    assert np.array_equal(task.pseudo_control, again.pseudo_control)
    assert np.array_equal(task.pseudo_treated, again.pseudo_treated)


def test_build_trace_strictly_decreasing():
    pop = _iid_population(120, seed=4)
    cfg = HillClimbConfig(max_iters=4000, patience=500, seed=5)
    task = build_artificial_task(pop, pop.outcomes(), (0.3, 0.2), cfg)
    trace = task.loss_trace
    assert len(trace) >= 2
    assert all(b < a for a, b in zip(trace, trace[1:]))
    assert task.achieved_loss <= trace[0] + 1e-12
    assert abs(task.achieved_loss - trace[-1]) < 1e-8 + 1e-6 * abs(trace[-1])


def test_build_targets_are_half_the_reference():
    pop = _iid_population(30, seed=6)
    cfg = HillClimbConfig(max_iters=0)
    task = build_artificial_task(pop, pop.outcomes(), (0.7, 0.3), cfg)
    assert task.target_ate == 0.5 * 0.7
    assert task.target_smd == 0.5 * 0.3


def test_build_partition_exact_for_every_seed():
    pop = _iid_population(50, seed=8)
    for seed in range(10):
        cfg = HillClimbConfig(max_iters=300, patience=100, seed=seed)
        task = build_artificial_task(pop, pop.outcomes(), (0.2, 0.1), cfg)
        merged = np.concatenate([task.pseudo_control, task.pseudo_treated])
        assert len(task.pseudo_control) == 25
        assert len(task.pseudo_treated) == 25
        assert np.array_equal(np.sort(merged), np.arange(50))


def test_build_null_targets_reachable_on_iid_population():
    pop = _iid_population(200, seed=7)
    task = build_artificial_task(pop, pop.outcomes(), (0.0, 0.0), HillClimbConfig(seed=0))
    y = pop.outcomes()
    ate_val = y[task.pseudo_treated].mean() - y[task.pseudo_control].mean()
    assert task.achieved_loss < 1e-4
    assert abs(ate_val) < 0.02


def test_build_requires_four_samples():
    pop = _iid_population(200, seed=9)
    small = Population(pop.dataset, np.arange(3))
    with pytest.raises(ValidationError):
        build_artificial_task(small, small.outcomes(), (0.0, 0.0), HillClimbConfig())


# -- task_reference -----------------------------------------------------------


def test_task_reference_values_and_larger_arm():
    t = np.array([0.0] * 6 + [1.0] * 4)
    y = np.array([0.0] * 6 + [1.0] * 4)
    ds = build_dataset(t, y, continuous={"x": np.arange(10.0)})
    (ate_ref, smd_ref), probs, larger = task_reference(ds)
    assert ate_ref == 1.0
    assert smd_ref > 0
    assert probs == (0.6, 0.4)
    assert np.array_equal(larger, np.arange(6))


def test_task_reference_rejects_single_arm():
    ds = build_dataset(np.ones(10), np.zeros(10), continuous={"x": np.arange(10.0)})
    with pytest.raises(SingleArmError):
        task_reference(ds)


# -- compute_a2a --------------------------------------------------------------


class _SelfMatchPipeline:
    """Oracle that matches every sample to itself: identical matched arms."""

    def estimate_matched_ate(self, dataset, seed):
        y = dataset.column(dataset.outcome_name)
        return ate(y, y)


class _ConstantPipeline:
    def __init__(self, value):
        self.value = value
        self.calls = 0

    def estimate_matched_ate(self, dataset, seed):
        self.calls += 1
        return self.value


class _FlakyPipeline(_ConstantPipeline):
    def __init__(self, value, fail_on):
        super().__init__(value)
        self.fail_on = fail_on

    def estimate_matched_ate(self, dataset, seed):
        self.calls += 1
        if self.calls in self.fail_on:
            raise MatchforgeError("injected failure")
        return self.value


def _duplicated_dataset(seed=0):
    """Larger arm holds two copies of every control sample."""
    rng = np.random.default_rng(seed)
    base_x = rng.normal(size=30)
    base_y = rng.normal(size=30)
    x1 = rng.normal(size=20)
    y1 = rng.normal(size=20)
    t = np.array([0.0] * 60 + [1.0] * 20)
    return build_dataset(
        t,
        np.concatenate([base_y, base_y, y1]),
        continuous={"x": np.concatenate([base_x, base_x, x1])},
    )


def test_a2a_zero_for_self_matching_oracle():
    res = compute_a2a(_SelfMatchPipeline(), _duplicated_dataset(), n_bootstraps=8, seed=5)
    assert res.mean == 0.0
    assert res.per_bootstrap == [0.0] * 8
    assert res.n_bootstraps == 8
    assert res.failures == []


def test_a2a_single_bootstrap_mean():
    ds = generate(SynthConfig(n_samples=200, n_features=4, n_confounders=2, seed=1)).dataset
    pipe = PipelineSpec("LR", False, "nearest")
    res = compute_a2a(pipe, ds, n_bootstraps=1, seed=3)
    assert len(res.per_bootstrap) == 1
    assert res.mean == res.per_bootstrap[0]
    assert res.per_bootstrap[0] >= 0


def test_a2a_prefix_determinism():
    ds = generate(SynthConfig(n_samples=200, n_features=4, n_confounders=2, seed=1)).dataset
    pipe = PipelineSpec("LR", False, "nearest")
    one = compute_a2a(pipe, ds, n_bootstraps=1, seed=3)
    three = compute_a2a(pipe, ds, n_bootstraps=3, seed=3)
    again = compute_a2a(pipe, ds, n_bootstraps=3, seed=3)
    assert three.per_bootstrap[0] == one.per_bootstrap[0]
    assert three.per_bootstrap == again.per_bootstrap


def test_a2a_worker_count_does_not_change_results():
    ds = generate(SynthConfig(n_samples=200, n_features=4, n_confounders=2, seed=1)).dataset
    pipe = PipelineSpec("LR", False, "nearest")
    serial = compute_a2a(pipe, ds, n_bootstraps=4, seed=3, workers=1)
    pooled = compute_a2a(pipe, ds, n_bootstraps=4, seed=3, workers=2)
    assert serial.per_bootstrap == pooled.per_bootstrap


def test_a2a_excludes_recorded_failures():
    res = compute_a2a(_FlakyPipeline(0.25, fail_on={2}), _duplicated_dataset(), n_bootstraps=3, seed=5)
    assert res.per_bootstrap == [0.25, 0.25]
    assert res.mean == 0.25
    assert res.n_bootstraps == 3
    assert len(res.failures) == 1
    assert res.failures[0][0] == 2
    assert "injected failure" in res.failures[0][1]


def test_a2a_unavailable_when_majority_fails():
    flaky = _FlakyPipeline(0.25, fail_on={1, 2, 3})
    with pytest.raises(A2AUnavailableError):
        compute_a2a(flaky, _duplicated_dataset(), n_bootstraps=4, seed=5)


def test_a2a_requires_a_bootstrap():
    with pytest.raises(ValidationError):
        compute_a2a(_SelfMatchPipeline(), _duplicated_dataset(), n_bootstraps=0, seed=5)


def test_a2a_below_artificial_task_bias():
    # the artificial tasks carry half the real task's bias; a real pipeline
    # should correct part of it, landing below the tasks' unadjusted |ATE|
    ds = generate(SynthConfig(n_samples=1000, seed=0)).dataset
    pipe = PipelineSpec("LR", False, "optimal")
    res = compute_a2a(pipe, ds, n_bootstraps=10, seed=0)
    reference, probs, larger = task_reference(ds)
    unadjusted = []
    for b in range(1, 11):
        task_ds, task, _ = make_artificial_task(
            ds, larger, reference, probs, b, 0, HillClimbConfig()
        )
        assert task.target_ate == 0.5 * reference[0]
        t = task_ds.column(task_ds.treatment_name)
        y = task_ds.column(task_ds.outcome_name)
        unadj = abs(y[t == 1].mean() - y[t == 0].mean())
        assert abs(unadj - abs(task.target_ate)) < 0.05  # climb hit the target
        unadjusted.append(unadj)
    assert 0 < res.mean < np.mean(unadjusted)
