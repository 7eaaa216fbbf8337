"""Worker-pool helpers. Results are always ordered by input position."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

ENV_THREADS = "MATCHFORGE_THREADS"


def worker_count(requested: int | None = None) -> int:
    """Resolve a worker count, capped by the MATCHFORGE_THREADS env var."""
    cap = os.environ.get(ENV_THREADS)
    limit = int(cap) if cap else (os.cpu_count() or 1)
    if requested is None:
        requested = limit
    return max(1, min(requested, limit))


def run_ordered(fn, payloads: list, workers: int = 1) -> list:
    """Map fn over payloads, preserving input order in the result list.

    workers <= 1 runs in-process; anything else uses a process pool. fn and
    payloads must be picklable in the pooled case.
    """
    if workers <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, payloads))
