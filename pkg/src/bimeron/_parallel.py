"""Row-block parallel helpers with order-independent reductions."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

ENV_THREADS = "BIMERON_THREADS"

# Fixed block size: partitioning never depends on the worker count.
_BLOCK_ROWS = 64


def worker_count() -> int:
    raw = os.environ.get(ENV_THREADS, "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def row_blocks(n_rows: int) -> list[slice]:
    return [slice(i, min(i + _BLOCK_ROWS, n_rows)) for i in range(0, n_rows, _BLOCK_ROWS)]


def map_rows(func: Callable[[slice], np.ndarray], n_rows: int) -> np.ndarray:
    """Evaluate ``func`` on fixed row blocks and stack the results along axis 0."""
    blocks = row_blocks(n_rows)
    workers = min(worker_count(), len(blocks))
    if workers <= 1:
        parts = [func(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(func, blocks))
    return np.concatenate(parts, axis=0)


def total(values: np.ndarray) -> float:
    """Correctly rounded sum of all entries.

    Rows are summed by numpy's pairwise kernel and the row sums combined with
    ``math.fsum``; the result is bit-identical for any thread count.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    if arr.ndim == 1:
        return math.fsum(arr.tolist())
    rows = arr.reshape(arr.shape[0], -1).sum(axis=1)
    return math.fsum(rows.tolist())
