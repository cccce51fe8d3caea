"""Ordered fan-out of per-frame work over a process pool.

Shared read-only inputs are handed to workers once through the pool
initializer (inherited without copying under the fork start method); each task
only carries a frame index. Results always come back in index order.
"""

from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Optional, Sequence, TypeVar

T = TypeVar("T")

_shared: Any = None


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def _install(shared) -> None:
    global _shared
    _shared = shared


def _run(fn, i):
    return fn(_shared, i)


def _context():
    methods = multiprocessing.get_all_start_methods()
    return multiprocessing.get_context("fork" if "fork" in methods else None)


def map_frames(fn: Callable[[Any, int], T], n: int, workers: Optional[int] = 1,
               shared: Sequence = ()) -> List[T]:
    """Return ``[fn(shared, i) for i in range(n)]``, possibly computed in parallel.

    ``fn`` must be a module-level function so it can be sent to workers.
    """
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or n <= 1:
        return [fn(shared, i) for i in range(n)]
    workers = min(workers, n)
    chunk = max(1, n // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, mp_context=_context(),
                             initializer=_install, initargs=(shared,)) as pool:
        return list(pool.map(_run, [fn] * n, range(n), chunksize=chunk))
