"""Thread-pool helper honoring the NOISYCOIN_THREADS cap (0 or unset = auto)."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    raw = os.environ.get("NOISYCOIN_THREADS", "0")
    try:
        k = int(raw)
    except ValueError:
        k = 0
    if k <= 0:
        return min(8, os.cpu_count() or 1)
    return k


def thread_map(fn, items):
    """Map fn over items, in order, possibly on a thread pool.

    Results are assembled by input position, so the output is identical for
    any thread count.
    """
    items = list(items)
    workers = thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
