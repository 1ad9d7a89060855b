"""Ordered thread-pool map for independent runs (multistart, sweeps)."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("SPINWALL_THREADS", "")
        threads = int(env) if env.strip() else 1
    return max(1, int(threads))


def ordered_map(fn, items, threads: int | None = None) -> list:
    """[fn(x) for x in items], possibly concurrent; results keep input order."""
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
