"""Chunked thread-pool reductions over sample indices.

Kernels release the GIL and return integer arrays; chunk boundaries depend
only on the total and the chunk size, so sums are identical for any number of
workers.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 1 << 15


def default_workers() -> int:
    try:
        return max(len(os.sched_getaffinity(0)), 1)
    except AttributeError:
        return os.cpu_count() or 1


def chunk_bounds(total: int, chunk: int = CHUNK):
    return [(s, min(chunk, total - s)) for s in range(0, total, chunk)]


def reduce_chunks(kernel, total: int, workers: int | None = None, chunk: int = CHUNK):
    """Sum of ``kernel(start, count)`` over fixed chunks of ``range(total)``.

    ``kernel`` returns a tuple of integer arrays; the result is the tuple of
    elementwise sums.
    """
    bounds = chunk_bounds(int(total), chunk)
    workers = default_workers() if workers is None else max(int(workers), 1)
    if workers == 1 or len(bounds) == 1:
        parts = [kernel(s, c) for s, c in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: kernel(*b), bounds))
    return tuple(np.sum([p[i] for p in parts], axis=0) for i in range(len(parts[0])))


def map_ordered(fn, items, workers: int | None = None):
    """``[fn(i) for i in items]`` on a thread pool, results in input order."""
    items = list(items)
    workers = default_workers() if workers is None else max(int(workers), 1)
    if workers == 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
