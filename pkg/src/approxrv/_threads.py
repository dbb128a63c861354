"""Worker-count control for the embarrassingly parallel stages.

Only fitting and error-grid cells run in the pool; anything that
measures wall-clock cost stays single-threaded so timings are honest.
Results are merged by key, so they are independent of worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigError

_max_workers: int | None = None


def set_max_workers(n: int | None) -> None:
    global _max_workers
    if n is not None and n < 1:
        raise ConfigError(f"worker count must be >= 1, got {n}")
    _max_workers = n


def max_workers() -> int:
    if _max_workers is not None:
        return _max_workers
    env = os.environ.get("APPROXRV_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"APPROXRV_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def parallel_map(fn, items):
    """Ordered map over ``items``, threaded when workers > 1."""
    items = list(items)
    workers = min(max_workers(), len(items)) or 1
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
