"""Deterministic parallel map over independent work items."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_jobs() -> int:
    env = os.environ.get("SCSE_JOBS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def pmap(fn, items, jobs=1):
    """Map fn over items, preserving input order in the results."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
