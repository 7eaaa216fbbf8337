"""1-D bipartite matching of the smaller population into the larger one."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MatchforgeError
from .tabular import DesignMatrix, Population, split_by_treatment


@dataclass(frozen=True)
class MatchResult:
    """Pairs of (index-in-larger, index-in-smaller) arm positions."""

    pairs: tuple[tuple[int, int], ...]
    method: str  # "nearest" | "optimal"
    total_distance: float

    def __post_init__(self) -> None:
        if len(self.pairs) == 0:
            raise MatchforgeError("MatchResult requires at least one pair")
        larges = [p[0] for p in self.pairs]
        smalls = [p[1] for p in self.pairs]
        if len(set(smalls)) != len(smalls) or len(set(larges)) != len(larges):
            raise MatchforgeError("matching must be injective on both sides")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "total_distance": self.total_distance,
            "pairs": [list(p) for p in self.pairs],
        }


def _check_sizes(values_large: np.ndarray, values_small: np.ndarray) -> None:
    if len(values_small) < 1 or len(values_large) < len(values_small):
        raise MatchforgeError("need |large| >= |small| >= 1")


def _fsum_distance(
    values_large: np.ndarray, values_small: np.ndarray, pairs: list[tuple[int, int]]
) -> float:
    # order-independent sum so equal assignments report equal costs
    return math.fsum(abs(float(values_large[l]) - float(values_small[s])) for l, s in pairs)


def match_nearest(
    values_large: np.ndarray, values_small: np.ndarray, seed: int = 0
) -> MatchResult:
    """Greedy nearest-neighbor matching without replacement.

    Smaller-population samples are processed in descending matching-value
    order; each takes the closest unmatched larger-population sample, ties
    to the lower index. Deterministic; ``seed`` is accepted for interface
    stability but unused.
    """
    del seed
    vl = np.asarray(values_large, dtype=float)
    vs = np.asarray(values_small, dtype=float)
    _check_sizes(vl, vs)
    order = np.argsort(-vs, kind="stable")
    taken = np.zeros(len(vl), dtype=bool)
    pairs: list[tuple[int, int]] = []
    for s in order:
        dist = np.abs(vl - vs[s])
        dist[taken] = np.inf
        j = int(np.argmin(dist))  # first minimum -> lowest index
        taken[j] = True
        pairs.append((j, int(s)))
    return MatchResult(tuple(pairs), "nearest", _fsum_distance(vl, vs, pairs))


def match_optimal(values_large: np.ndarray, values_small: np.ndarray) -> MatchResult:
    """Minimum total |distance| assignment of small samples to large ones.

    On a line an optimal assignment exists that is non-crossing once both
    sides are sorted, so a dynamic program over (sorted small, sorted large)
    prefixes is exact:

        D[i, j] = min(D[i, j-1], D[i-1, j-1] + |s_i - l_j|)

    Ties prefer the earlier large sample in (value, index) order.
    """
    vl = np.asarray(values_large, dtype=float)
    vs = np.asarray(values_small, dtype=float)
    _check_sizes(vl, vs)
    m, n = len(vs), len(vl)
    order_s = np.argsort(vs, kind="stable")
    order_l = np.argsort(vl, kind="stable")
    ssorted = vs[order_s]
    lsorted = vl[order_l]

    dp = np.empty((m, n))
    cost0 = np.abs(ssorted[0] - lsorted)
    dp[0] = np.minimum.accumulate(cost0)
    for i in range(1, m):
        t = np.full(n, np.inf)
        t[i:] = dp[i - 1, i - 1 : n - 1] + np.abs(ssorted[i] - lsorted[i:])
        dp[i] = np.minimum.accumulate(t)

    assigned = np.empty(m, dtype=int)
    j = n - 1
    for i in range(m - 1, -1, -1):
        while j > i and dp[i, j - 1] == dp[i, j]:
            j -= 1
        assigned[i] = j
        j -= 1

    pairs = sorted(
        (int(order_l[assigned[i]]), int(order_s[i])) for i in range(m)
    )
    return MatchResult(tuple(pairs), "optimal", _fsum_distance(vl, vs, pairs))


def extract_matched(d: DesignMatrix, r: MatchResult) -> tuple[Population, Population]:
    """Matched sub-populations (larger arm, smaller arm), ordered by pair list.

    Pair indices are arm positions: the larger arm is the bigger treatment
    group (control on ties), ordered as returned by split_by_treatment.
    """
    idx0, idx1 = split_by_treatment(d)
    if len(idx0) >= len(idx1):
        large_arm, small_arm = idx0, idx1
    else:
        large_arm, small_arm = idx1, idx0
    larges = np.array([p[0] for p in r.pairs])
    smalls = np.array([p[1] for p in r.pairs])
    if larges.max() >= len(large_arm) or smalls.max() >= len(small_arm):
        raise MatchforgeError("match indices out of range for this design")
    rows_large = d.group_index[large_arm[larges]]
    rows_small = d.group_index[small_arm[smalls]]
    return Population(d.source, rows_large), Population(d.source, rows_small)
