"""Worker-count control shared by the per-fiber loops."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "BBR_THREADS"


def worker_count() -> int:
    """``BBR_THREADS`` if set to a positive integer, else the number of cores."""
    raw = os.environ.get(ENV_THREADS, "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"{ENV_THREADS} must be a positive integer, got {raw!r}") from None
        if value < 1:
            raise ValueError(f"{ENV_THREADS} must be a positive integer, got {raw!r}")
        return value
    return os.cpu_count() or 1


def ordered_map(fn, items) -> list:
    """``[fn(x) for x in items]``, threaded when more than one worker is allowed.

    Results come back in input order, so callers stay schedule-independent.
    """
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
