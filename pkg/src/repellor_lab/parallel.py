"""Seeded random streams and an order-preserving worker pool.

Random numbers come from Philox (a counter-based generator); stream ``s`` of
seed ``k`` uses the 128-bit key ``(k, s)``, so work split into fixed chunks
draws the same numbers whatever the number of threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 65536

_threads = 1


def set_threads(n: int) -> None:
    global _threads
    _threads = max(1, int(n))


def get_threads() -> int:
    return _threads


def stream(seed: int, index: int = 0) -> np.random.Generator:
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def chunk_bounds(total: int, chunk: int = DEFAULT_CHUNK):
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]


def ordered_map(func, items, threads: int | None = None):
    """``[func(i) for i in items]`` evaluated on a pool, results in input order."""
    items = list(items)
    threads = _threads if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
