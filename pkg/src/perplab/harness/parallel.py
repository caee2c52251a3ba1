"""Order-preserving process-pool mapper.

Work items are pure functions of their index, results are returned in item
order and reduced in the caller, so output does not depend on the worker
count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

from ..stats.experiments import serial_map

ENV_WORKERS = "PERPLAB_WORKERS"


def resolve_workers(flag: int | None, configured: int) -> int:
    """``--workers`` if given, else ``$PERPLAB_WORKERS``, else the config; 0 means one per CPU."""
    if flag is not None:
        n = flag
    elif os.environ.get(ENV_WORKERS, "").strip():
        try:
            n = int(os.environ[ENV_WORKERS])
        except ValueError:
            raise ValueError(f"{ENV_WORKERS} must be an integer, got {os.environ[ENV_WORKERS]!r}") from None
    else:
        n = configured
    if n < 0:
        raise ValueError("worker count must be nonnegative")
    return n if n > 0 else (os.cpu_count() or 1)


class PoolMapper:
    """``mapper(fn, items)`` backed by a process pool; use as a context manager."""

    def __init__(self, workers: int):
        self.workers = workers
        self._pool = None

    def __enter__(self):
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(max_workers=self.workers)
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __call__(self, fn, items):
        items = list(items)
        if self._pool is None or len(items) < 2:
            return serial_map(fn, items)
        chunk = max(1, len(items) // (4 * self.workers))
        return list(self._pool.map(fn, items, chunksize=chunk))
