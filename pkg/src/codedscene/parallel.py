"""Bounded parallelism helper.

``SCENECODE_THREADS`` caps worker threads for the embarrassingly parallel
per-frame stages (rendering, baseline fusion gathers). Results are always
collected in input order, so output is identical at any thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    value = os.environ.get("SCENECODE_THREADS", "1")
    try:
        count = int(value)
    except ValueError as exc:
        raise RuntimeError(f"SCENECODE_THREADS must be an integer, got {value!r}") from exc
    return max(1, count)


def ordered_map(fn, items):
    """map() preserving order, threaded when SCENECODE_THREADS > 1."""
    items = list(items)
    workers = worker_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
