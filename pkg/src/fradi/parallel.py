"""Worker-count control shared by the assembly and TLR code."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    """Threads to use: ``FRADI_THREADS`` if set, else the CPU count."""
    env = os.environ.get("FRADI_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"FRADI_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def map_ordered(fn, items, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, run on a thread pool; result order is input order."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def map_chunks(fn, n: int, workers: int | None = None) -> list:
    """Split ``range(n)`` into contiguous slices, one or more per worker."""
    workers = worker_count() if workers is None else workers
    parts = max(1, min(n, 4 * workers)) if workers > 1 else 1
    bounds = [n * p // parts for p in range(parts + 1)]
    return map_ordered(fn, [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])], workers)
