"""Order-preserving fan-out over worker processes."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(fn: Callable[[T], R], jobs: Iterable[T], workers: int = 1) -> list[R]:
    """``[fn(j) for j in jobs]``, optionally across processes; results keep job order."""
    jobs = list(jobs)
    if workers < 1:
        raise ValueError("workers must be at least 1")
    if workers == 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))
