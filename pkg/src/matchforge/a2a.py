"""Artificial matching tasks with zero ground-truth effect, and the A2A metric.

An artificial task splits one treatment arm into pseudo-control and
pseudo-treated subsets whose unadjusted ATE and SMD hit half the real task's
values, found by seeded hill climbing over random cross-cluster swaps. A2A is
the mean |matched ATE| a pipeline produces over bootstrapped artificial tasks;
the true effect is zero by construction, so any distance from zero is error.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import A2AUnavailableError, MatchforgeError, SingleArmError, ValidationError
from .metrics import ate, balance_report
from .parallel import run_ordered
from .tabular import Dataset, Population


@dataclass(frozen=True)
class HillClimbConfig:
    max_iters: int = 20000
    patience: int = 2000  # stop after this many consecutive rejected swaps
    seed: int = 0
    membership_probs: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self) -> None:
        if self.max_iters < 0:
            raise ValidationError("max_iters must be >= 0")
        if self.patience < 1:
            raise ValidationError("patience must be >= 1")
        p0, p1 = self.membership_probs
        if p0 <= 0 or p1 <= 0 or abs(p0 + p1 - 1.0) > 1e-9:
            raise ValidationError("membership_probs must be positive and sum to 1")


@dataclass(frozen=True)
class ArtificialTask:
    pseudo_control: np.ndarray  # positions into the source population
    pseudo_treated: np.ndarray
    target_ate: float  # half the reference ATE
    target_smd: float  # half the reference SMD
    achieved_loss: float
    loss_trace: tuple[float, ...]  # initial loss, then each accepted loss


@dataclass(frozen=True)
class A2AResult:
    per_bootstrap: list[float]  # |matched ATE| of each successful bootstrap
    mean: float
    n_bootstraps: int
    failures: list[tuple[int, str]] = field(default_factory=list)


def partition_loss(
    candidate: tuple[Population, Population],
    reference: tuple[float, float],
    agg: str = "mean",
) -> float:
    """Squared distance of a candidate partition from the half-bias targets.

    candidate = (pseudo-control population, pseudo-treated population);
    reference = the real task's (unadjusted ATE, unadjusted SMD).
    """
    pop0, pop1 = candidate
    if pop0.n == 0 or pop1.n == 0:
        raise ValidationError("both candidate subsets must be non-empty")
    ate_ref, smd_ref = reference
    ate_c = ate(pop0.outcomes(), pop1.outcomes())
    smd_c = balance_report(pop0, pop1, agg).scalar()
    return (0.5 * ate_ref - ate_c) ** 2 + (0.5 * smd_ref - smd_c) ** 2


class _PartitionState:
    """Sufficient statistics of a 2-way partition, updatable per swap.

    Cluster sizes never change, so per-cluster sums of x, x^2, outcomes and
    categorical level counts are enough to evaluate the loss of any proposed
    cross-cluster swap in O(features).
    """

    def __init__(
        self,
        cont: np.ndarray,
        cat_codes: list[np.ndarray],
        cat_levels: list[int],
        y: np.ndarray,
        c0: np.ndarray,
        c1: np.ndarray,
        agg: str,
    ) -> None:
        self.C = cont
        self.cat_codes = cat_codes
        self.y = y
        self.c0 = c0
        self.c1 = c1
        self.n0 = len(c0)
        self.n1 = len(c1)
        self.agg = agg
        self.n_features = cont.shape[1] + len(cat_codes)
        self.S0 = cont[c0].sum(axis=0)
        self.SS0 = (cont[c0] ** 2).sum(axis=0)
        self.S1 = cont[c1].sum(axis=0)
        self.SS1 = (cont[c1] ** 2).sum(axis=0)
        self.o0 = float(y[c0].sum())
        self.o1 = float(y[c1].sum())
        self.T0 = [
            np.bincount(codes[c0], minlength=lv).astype(float)
            for codes, lv in zip(cat_codes, cat_levels)
        ]
        self.T1 = [
            np.bincount(codes[c1], minlength=lv).astype(float)
            for codes, lv in zip(cat_codes, cat_levels)
        ]
        # column marginals are swap-invariant, so expected counts are fixed
        n = self.n0 + self.n1
        self.E0 = [self.n0 * (t0 + t1) / n for t0, t1 in zip(self.T0, self.T1)]
        self.E1 = [self.n1 * (t0 + t1) / n for t0, t1 in zip(self.T0, self.T1)]

    def _cohens(self, S0, SS0, S1, SS1):
        n0, n1 = self.n0, self.n1
        mu0 = S0 / n0
        mu1 = S1 / n1
        v0 = (SS0 - S0 * mu0) / (n0 - 1) if n0 > 1 else np.zeros_like(S0)
        v1 = (SS1 - S1 * mu1) / (n1 - 1) if n1 > 1 else np.zeros_like(S1)
        pooled = np.maximum(((n0 - 1) * v0 + (n1 - 1) * v1) / (n0 + n1 - 2), 0.0)
        diff = mu0 - mu1
        with np.errstate(divide="ignore", invalid="ignore"):
            d = diff / np.sqrt(pooled)
        return np.where(pooled > 0, d, np.where(diff == 0, 0.0, np.inf))

    def _cramers(self, T0, T1, E0, E1):
        n = self.n0 + self.n1
        levels = T0.shape[-1]
        if levels < 2:
            return np.zeros(T0.shape[:-1])
        chi2 = ((T0 - E0) ** 2 / E0 + (T1 - E1) ** 2 / E1).sum(axis=-1)
        return np.minimum(np.sqrt(chi2 / n), 1.0)

    def loss(self, targets: tuple[float, float]) -> float:
        d = self._cohens(self.S0, self.SS0, self.S1, self.SS1)
        vs = [
            self._cramers(t0, t1, e0, e1)
            for t0, t1, e0, e1 in zip(self.T0, self.T1, self.E0, self.E1)
        ]
        ate_val = self.o1 / self.n1 - self.o0 / self.n0
        mags = np.concatenate([np.abs(d)] + [np.atleast_1d(v) for v in vs])
        if self.n_features == 0:
            smd = 0.0
        elif self.agg == "mean":
            smd = mags.sum() / self.n_features
        else:
            smd = mags.max()
        t_ate, t_smd = targets
        return float((t_ate - ate_val) ** 2 + (t_smd - smd) ** 2)

    def batch_losses(self, a_pos: np.ndarray, b_pos: np.ndarray, targets) -> np.ndarray:
        i0 = self.c0[a_pos]
        i1 = self.c1[b_pos]
        x0 = self.C[i0]
        x1 = self.C[i1]
        dx = x1 - x0
        dxx = x1**2 - x0**2
        d = self._cohens(self.S0 + dx, self.SS0 + dxx, self.S1 - dx, self.SS1 - dxx)
        dy = self.y[i1] - self.y[i0]
        ate_val = (self.o1 - dy) / self.n1 - (self.o0 + dy) / self.n0
        B = len(a_pos)
        vs = []
        for codes, T0, T1, E0, E1 in zip(self.cat_codes, self.T0, self.T1, self.E0, self.E1):
            g0 = codes[i0]
            g1 = codes[i1]
            T0b = np.tile(T0, (B, 1))
            T1b = np.tile(T1, (B, 1))
            r = np.arange(B)
            T0b[r, g0] -= 1
            T0b[r, g1] += 1
            T1b[r, g1] -= 1
            T1b[r, g0] += 1
            vs.append(self._cramers(T0b, T1b, E0, E1))
        t_ate, t_smd = targets
        if self.n_features == 0:
            smd = np.zeros(B)
        else:
            total = np.abs(d).sum(axis=-1)
            for v in vs:
                total = total + np.abs(v)
            if self.agg == "mean":
                smd = total / self.n_features
            else:
                smd = np.abs(d).max(axis=-1) if d.shape[-1] else np.zeros(B)
                for v in vs:
                    smd = np.maximum(smd, np.abs(v))
        return (t_ate - ate_val) ** 2 + (t_smd - smd) ** 2

    def apply_swap(self, a: int, b: int) -> None:
        i0 = self.c0[a]
        i1 = self.c1[b]
        x0 = self.C[i0]
        x1 = self.C[i1]
        self.S0 = self.S0 + (x1 - x0)
        self.SS0 = self.SS0 + (x1**2 - x0**2)
        self.S1 = self.S1 - (x1 - x0)
        self.SS1 = self.SS1 - (x1**2 - x0**2)
        dy = self.y[i1] - self.y[i0]
        self.o0 = self.o0 + dy
        self.o1 = self.o1 - dy
        for codes, T0, T1 in zip(self.cat_codes, self.T0, self.T1):
            g0 = codes[i0]
            g1 = codes[i1]
            T0[g0] -= 1
            T0[g1] += 1
            T1[g1] -= 1
            T1[g0] += 1
        self.c0[a] = i1
        self.c1[b] = i0


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def build_artificial_task(
    source_pop: Population,
    source_outcomes: np.ndarray,
    reference: tuple[float, float],
    cfg: HillClimbConfig,
    agg: str = "mean",
) -> ArtificialTask:
    """Partition one population into pseudo-arms hitting half the reference bias.

    Subset sizes follow cfg.membership_probs (the real task's arm ratio) and
    stay fixed; hill climbing proposes uniform cross-cluster swaps for up to
    max_iters steps, keeping only strict loss decreases, and stops early after
    `patience` consecutive rejections.
    """
    n = source_pop.n
    if n < 4:
        raise ValidationError("artificial tasks need a source population of >= 4 samples")
    n0 = min(max(_round_half_up(cfg.membership_probs[0] * n), 1), n - 1)
    targets = (0.5 * reference[0], 0.5 * reference[1])

    ds = source_pop.dataset
    rows = source_pop.rows
    cont_names = [c.name for c in ds.columns if c.kind == "continuous"]
    cat_names = [c.name for c in ds.columns if c.kind == "categorical"]
    if cont_names:
        C = np.column_stack([np.asarray(ds.column(nm)[rows], dtype=float) for nm in cont_names])
        C = C - C.mean(axis=0)  # centering: Cohen's D is shift-invariant, sums stay stable
    else:
        C = np.zeros((n, 0))
    cat_codes = []
    cat_levels = []
    for nm in cat_names:
        _, codes = np.unique(ds.column(nm)[rows].astype(str), return_inverse=True)
        cat_codes.append(codes)
        cat_levels.append(int(codes.max()) + 1)
    y = np.asarray(source_outcomes, dtype=float)

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    perm = rng.permutation(n)
    c0 = perm[:n0].copy()
    c1 = perm[n0:].copy()
    state = _PartitionState(C, cat_codes, cat_levels, y, c0, c1, agg)
    current = state.loss(targets)
    trace = [current]

    K = cfg.max_iters
    if K > 0:
        a_stream = rng.integers(0, state.n0, size=K)
        b_stream = rng.integers(0, state.n1, size=K)
        pos = 0
        rejected = 0
        batch = 128
        while pos < K and rejected < cfg.patience:
            end = min(pos + batch, K)
            losses = state.batch_losses(a_stream[pos:end], b_stream[pos:end], targets)
            better = np.flatnonzero(losses < current)
            if len(better) == 0:
                rejected += end - pos
                pos = end
                continue
            t = int(better[0])
            if rejected + t >= cfg.patience:
                break
            state.apply_swap(int(a_stream[pos + t]), int(b_stream[pos + t]))
            current = float(losses[t])
            trace.append(current)
            rejected = 0
            pos = pos + t + 1

    final0 = np.sort(state.c0)
    final1 = np.sort(state.c1)
    pop0 = Population(ds, rows[final0])
    pop1 = Population(ds, rows[final1])
    achieved = partition_loss((pop0, pop1), reference, agg)
    return ArtificialTask(
        pseudo_control=final0,
        pseudo_treated=final1,
        target_ate=targets[0],
        target_smd=targets[1],
        achieved_loss=achieved,
        loss_trace=tuple(trace),
    )


# -- bootstrapped A2A ---------------------------------------------------------


def task_reference(dataset: Dataset, agg: str = "mean"):
    """Unadjusted (ATE, SMD) of the real task plus arm bookkeeping."""
    t = dataset.column(dataset.treatment_name)
    rows0 = np.flatnonzero(t == 0)
    rows1 = np.flatnonzero(t == 1)
    if len(rows0) == 0 or len(rows1) == 0:
        raise SingleArmError("dataset has an empty treatment arm")
    y = dataset.column(dataset.outcome_name)
    ref = (
        ate(y[rows0], y[rows1]),
        balance_report(Population(dataset, rows0), Population(dataset, rows1), agg).scalar(),
    )
    n = len(rows0) + len(rows1)
    probs = (len(rows0) / n, len(rows1) / n)
    larger = rows0 if len(rows0) >= len(rows1) else rows1
    return ref, probs, larger


def make_artificial_task(
    dataset: Dataset,
    larger_rows: np.ndarray,
    reference: tuple[float, float],
    probs: tuple[float, float],
    b: int,
    seed: int,
    climb: HillClimbConfig,
    agg: str = "mean",
) -> tuple[Dataset, ArtificialTask, int]:
    """Bootstrap number ``b`` of the artificial-task construction.

    Resamples the larger arm with replacement, hill-climbs a partition toward
    the half-bias targets, and returns the pseudo-labeled dataset plus the
    derived seed any downstream fit must use.
    """
    ss = np.random.SeedSequence((seed, b))
    k_resample, k_climb, k_fit = (int(v) for v in ss.generate_state(3, dtype=np.uint64))
    rng = np.random.default_rng(k_resample)
    rows = larger_rows[rng.integers(0, len(larger_rows), size=len(larger_rows))]
    pop = Population(dataset, rows)
    cfg = replace(climb, seed=k_climb, membership_probs=probs)
    task = build_artificial_task(pop, pop.outcomes(), reference, cfg, agg)

    treatment = np.zeros(pop.n)
    treatment[task.pseudo_treated] = 1.0
    values = {}
    for col in dataset.columns:
        if col.kind == "treatment":
            values[col.name] = treatment
        else:
            values[col.name] = dataset.column(col.name)[rows]
    return Dataset(dataset.columns, values), task, k_fit


def _a2a_one(payload) -> tuple[int, float | None, str | None]:
    pipeline, dataset, larger_rows, reference, probs, b, seed, climb, agg = payload
    try:
        task_ds, _, fit_seed = make_artificial_task(
            dataset, larger_rows, reference, probs, b, seed, climb, agg
        )
        value = abs(float(pipeline.estimate_matched_ate(task_ds, fit_seed)))
        return b, value, None
    except MatchforgeError as exc:
        return b, None, str(exc)


def compute_a2a(
    pipeline,
    dataset: Dataset,
    n_bootstraps: int,
    seed: int,
    climb: HillClimbConfig | None = None,
    agg: str = "mean",
    workers: int = 1,
) -> A2AResult:
    """Mean |matched ATE| of ``pipeline`` over bootstrapped artificial tasks.

    ``pipeline`` must expose estimate_matched_ate(dataset, seed) -> float.
    Individual bootstrap failures are recorded and excluded; more than 50%
    failing raises A2AUnavailableError.
    """
    if n_bootstraps < 1:
        raise ValidationError("n_bootstraps must be >= 1")
    climb = climb or HillClimbConfig()
    reference, probs, larger_rows = task_reference(dataset, agg)
    payloads = [
        (pipeline, dataset, larger_rows, reference, probs, b, seed, climb, agg)
        for b in range(1, n_bootstraps + 1)
    ]
    results = run_ordered(_a2a_one, payloads, workers)
    values = [v for _, v, _ in results if v is not None]
    failures = [(b, err) for b, v, err in results if v is None]
    if len(failures) > n_bootstraps / 2:
        raise A2AUnavailableError(
            f"{len(failures)} of {n_bootstraps} bootstraps failed: {failures[0][1]}"
        )
    return A2AResult(
        per_bootstrap=values,
        mean=float(np.mean(values)),
        n_bootstraps=n_bootstraps,
        failures=failures,
    )
