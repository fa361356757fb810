"""Bounded process pool for independent runs (seeds, trials)."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """``SHEAFLAB_THREADS`` if set, else the CPUs this process may run on."""
    env = os.environ.get("SHEAFLAB_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def pmap(fn: Callable[[T], R], jobs: Iterable[T], workers: int | None = None) -> list[R]:
    """``[fn(j) for j in jobs]``, in job order, over at most ``workers`` processes."""
    jobs = list(jobs)
    n = min(worker_count() if workers is None else max(1, workers), len(jobs))
    if n <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(n) as ex:
        return list(ex.map(fn, jobs))
