"""Process-pool fan-out with worker-count independent results.

Work is cut into units whose random streams depend only on the unit index,
and results come back in unit order, so the reduction never sees the pool
size.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

WORKERS_ENV = "FRAGSCOPE_WORKERS"


def resolve_workers(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def fan_out(fn, tasks, workers: int | None = 1):
    """``[fn(*task) for task in tasks]``, possibly across processes."""
    tasks = list(tasks)
    workers = resolve_workers(workers)
    if workers == 1 or len(tasks) <= 1:
        return [fn(*task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        futures = [pool.submit(fn, *task) for task in tasks]
        return [f.result() for f in futures]


def chunks(total: int, size: int):
    """``(index, start, count)`` triples covering ``range(total)``."""
    out = []
    for i, start in enumerate(range(0, total, size)):
        out.append((i, start, min(size, total - start)))
    return out
