"""Selection strategies over evaluated candidate pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoSelectionError, ValidationError

STRATEGIES = ("smd_threshold", "min_smd", "min_a2a", "smd_x_a2a", "pareto")
SMD_THRESHOLD = 0.10


@dataclass(frozen=True)
class CandidateEvaluation:
    """One pipeline's scores on the real task."""

    pipeline_id: str
    smd: float
    a2a: float
    ate: float
    smd_valid: bool
    overlap_valid: bool


@dataclass(frozen=True)
class SelectionResult:
    strategy: str
    selected: tuple[str, ...]  # pipeline ids, in candidate order
    ate_range: float
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "selected": list(self.selected),
            "ate_range": self.ate_range,
            "note": self.note,
        }


def _result(strategy: str, chosen: list[CandidateEvaluation], note: str = "") -> SelectionResult:
    ates = [c.ate for c in chosen]
    rng = float(max(ates) - min(ates)) if len(ates) > 1 else 0.0
    return SelectionResult(strategy, tuple(c.pipeline_id for c in chosen), rng, note)


def _smd_valid(cands: list[CandidateEvaluation]) -> list[CandidateEvaluation]:
    return [c for c in cands if c.smd < SMD_THRESHOLD]


def select_smd_threshold(cands: list[CandidateEvaluation]) -> SelectionResult:
    """Everything under the 10% SMD bar (strict); empty selections are flagged."""
    if not cands:
        raise ValidationError("no candidates to select from")
    chosen = _smd_valid(cands)
    note = "" if chosen else "no candidate passed the SMD threshold"
    return _result("smd_threshold", chosen, note)


def _argmin_by(cands: list[CandidateEvaluation], key) -> CandidateEvaluation:
    # ties resolve to the lexicographically smallest pipeline_id
    return min(cands, key=lambda c: (key(c), c.pipeline_id))


def select_min_smd(cands: list[CandidateEvaluation]) -> SelectionResult:
    valid = _smd_valid(cands)
    if not valid:
        raise NoSelectionError("no SMD-valid candidate available")
    return _result("min_smd", [_argmin_by(valid, lambda c: c.smd)])


def select_min_a2a(cands: list[CandidateEvaluation]) -> SelectionResult:
    valid = _smd_valid(cands)
    if not valid:
        raise NoSelectionError("no SMD-valid candidate available")
    return _result("min_a2a", [_argmin_by(valid, lambda c: c.a2a)])


def dbscan(points: np.ndarray, eps: float = 0.15, min_pts: int = 2) -> np.ndarray:
    """Density clustering of 2-D points; -1 labels noise.

    Coordinates are min-max normalized per axis first, so eps is a fraction
    of the observed spread. Neighborhoods are Euclidean and include the point
    itself. Deterministic given input order.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValidationError("dbscan expects a non-empty 2-D point array")
    if eps <= 0 or min_pts < 1:
        raise ValidationError("need eps > 0 and min_pts >= 1")
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    span[span == 0] = 1.0
    norm = (pts - lo) / span

    n = len(pts)
    dist = np.sqrt(((norm[:, None, :] - norm[None, :, :]) ** 2).sum(axis=2))
    neighbors = [np.flatnonzero(dist[i] <= eps) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbors])

    labels = np.full(n, -1, dtype=int)
    cluster = -1
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        cluster += 1
        labels[i] = cluster
        queue = list(neighbors[i])
        while queue:
            j = queue.pop(0)
            if labels[j] == -1:
                labels[j] = cluster
                if core[j]:
                    queue.extend(k for k in neighbors[j] if labels[k] == -1)
    return labels


def select_smd_x_a2a(
    cands: list[CandidateEvaluation], eps: float = 0.15, min_pts: int = 2
) -> SelectionResult:
    """DBSCAN over (smd, a2a); keep the cluster holding the best-A2A candidate.

    If that candidate is noise it is returned alone.
    """
    valid = _smd_valid(cands)
    if not valid:
        raise NoSelectionError("no SMD-valid candidate available")
    best = _argmin_by(valid, lambda c: c.a2a)
    points = np.array([[c.smd, c.a2a] for c in valid])
    labels = dbscan(points, eps, min_pts)
    best_label = labels[valid.index(best)]
    if best_label == -1:
        return _result("smd_x_a2a", [best], "best-A2A candidate is density noise")
    chosen = [c for c, lab in zip(valid, labels) if lab == best_label]
    return _result("smd_x_a2a", chosen)


def select_pareto(cands: list[CandidateEvaluation]) -> SelectionResult:
    """Non-dominated set under (minimize smd, minimize a2a)."""
    valid = _smd_valid(cands)
    if not valid:
        raise NoSelectionError("no SMD-valid candidate available")
    chosen = []
    for c in valid:
        dominated = any(
            (o.smd <= c.smd and o.a2a <= c.a2a and (o.smd < c.smd or o.a2a < c.a2a))
            for o in valid
        )
        if not dominated:
            chosen.append(c)
    return _result("pareto", chosen)


def run_strategies(
    cands: list[CandidateEvaluation], eps: float = 0.15, min_pts: int = 2
) -> list[SelectionResult]:
    """All five strategies; no-selection errors become empty flagged results."""
    out = []
    for name, fn in (
        ("smd_threshold", select_smd_threshold),
        ("min_smd", select_min_smd),
        ("min_a2a", select_min_a2a),
        ("smd_x_a2a", lambda c: select_smd_x_a2a(c, eps, min_pts)),
        ("pareto", select_pareto),
    ):
        if not cands:
            out.append(SelectionResult(name, (), 0.0, "no eligible candidates"))
            continue
        try:
            out.append(fn(cands))
        except NoSelectionError as exc:
            out.append(SelectionResult(name, (), 0.0, str(exc)))
    return out
