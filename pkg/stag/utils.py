import uuid
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

import numpy as np

T = TypeVar("T")


def generate_id(prefix: str = "") -> str:
    """Generate a short unique run ID."""
    short_id = uuid.uuid4().hex[:8]
    return f"{prefix}{short_id}" if prefix else short_id


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream). Stream ids are sample or run indices."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))


def segment_sum(values: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    """Sum consecutive row segments of ``values`` delimited by CSR ``indptr``.

    Rows with an empty segment come out as zeros. Summation runs in stored order.
    """
    n_rows = len(indptr) - 1
    out = np.zeros((n_rows,) + values.shape[1:], dtype=np.float64)
    starts = indptr[:-1]
    nonempty = starts < indptr[1:]
    if values.shape[0] and nonempty.any():
        out[nonempty] = np.add.reduceat(values, starts[nonempty], axis=0)
    return out


def run_indexed(fn: Callable[[int], T], runs: int, workers: int = 1) -> list[T]:
    """``fn(i)`` for i in range(runs), on a thread pool when workers > 1; results in index order."""
    if workers <= 1 or runs <= 1:
        return [fn(i) for i in range(runs)]
    with ThreadPoolExecutor(max_workers=min(workers, runs)) as pool:
        return list(pool.map(fn, range(runs)))
