"""Ordered thread-pool map; results never depend on the worker count."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Optional

_threads: Optional[int] = None


def set_threads(n: Optional[int]) -> None:
    global _threads
    _threads = None if n is None else max(1, int(n))


def threads() -> int:
    return _threads or os.cpu_count() or 1


def pmap(fn: Callable, items: Iterable, n: Optional[int] = None) -> list:
    """``[fn(x) for x in items]`` evaluated on up to ``n`` threads, in input order."""
    items = list(items)
    n = threads() if n is None else max(1, int(n))
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
