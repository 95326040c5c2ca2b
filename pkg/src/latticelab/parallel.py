"""Order-preserving process pool map.

Results come back in task order, so reductions do not depend on the
number of workers.
"""
from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor


def resolve_workers(workers) -> int:
    if workers in (None, 0, "max"):
        return os.cpu_count() or 1
    return max(1, int(workers))


def ordered_map(fn, tasks, workers=1) -> list:
    tasks = list(tasks)
    n = resolve_workers(workers)
    if n <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=min(n, len(tasks)), mp_context=ctx) as ex:
        return list(ex.map(fn, tasks))


def blocks(total: int, size: int) -> list[tuple[int, int]]:
    """Fixed [start, stop) replica blocks; independent of the worker count."""
    return [(a, min(a + size, total)) for a in range(0, total, size)]
