"""Deterministic fan-out over independent pure tasks.

Results always come back in submission order, so reductions are
reproducible for a fixed seed list regardless of worker count.
The ``PERORB_THREADS`` environment variable caps the pool size.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get("PERORB_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def fanout(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Map ``fn`` over ``items``, preserving order."""
    seq: Sequence[T] = list(items)
    workers = worker_count()
    if workers <= 1 or len(seq) <= 1:
        return [fn(x) for x in seq]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, seq))
