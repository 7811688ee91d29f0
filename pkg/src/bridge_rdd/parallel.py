"""Order-preserving map over independent replicates."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_jobs(jobs: int | None) -> int:
    """``None`` or ``0`` means all cores."""
    if not jobs:
        return os.cpu_count() or 1
    return max(1, int(jobs))


def ordered_map(fn, items, jobs: int | None = 1, chunksize: int = 4) -> list:
    """``[fn(x) for x in items]``, optionally across processes.

    Results come back in input order regardless of scheduling, so reductions
    over them are deterministic.
    """
    items = list(items)
    n = resolve_jobs(jobs)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
