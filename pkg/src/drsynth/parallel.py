"""Order-preserving parallel map over independent work items."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """``[fn(item) for item in items]``, optionally spread over worker processes.

    Results come back in input order, so any reduction done by the caller
    is independent of the worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def split_indices(n: int, parts: int) -> list[np.ndarray]:
    """Contiguous, non-empty index chunks covering ``range(n)``."""
    parts = max(1, min(parts, n))
    return [c for c in np.array_split(np.arange(n), parts) if c.size]


def chunk_count(workers: int, n: int, per_worker: int = 4) -> int:
    return 1 if workers <= 1 else max(1, min(n, workers * per_worker))

