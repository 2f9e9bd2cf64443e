from __future__ import annotations

import os
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def default_threads() -> int:
    return os.cpu_count() or 1


def pmap(func: Callable[[T], R], items: Iterable[T], threads: int | None = 1) -> list[R]:
    """Ordered map over a thread pool; ``threads <= 1`` runs inline."""
    items = list(items)
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def task_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for one task, derived from the run seed and the task keys.

    Every task draws from its own stream, so results do not depend on how
    tasks are spread over threads.
    """
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])
