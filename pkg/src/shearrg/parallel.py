"""Deterministic block-parallel map over path ensembles.

Work is cut into fixed-size blocks of item indices. Blocks are computed
independently (possibly in worker processes) and concatenated in index
order, so the assembled array, and every reduction over it, does not depend
on the worker count.
"""

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

WORKERS_ENV = "SHEARRG_WORKERS"
DEFAULT_BLOCK = 512


def worker_count():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def blocks(n_items, block_size=DEFAULT_BLOCK):
    return [np.arange(start, min(start + block_size, n_items))
            for start in range(0, n_items, block_size)]


def map_blocks(func, n_items, block_size=DEFAULT_BLOCK, workers=None):
    """Apply ``func(indices) -> array`` to each block and concatenate along axis 0.

    ``func`` must be picklable (a module-level function or functools.partial
    of one) when more than one worker is used.
    """
    parts = blocks(n_items, block_size)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(parts) <= 1:
        results = [func(idx) for idx in parts]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(func, parts))
    return np.concatenate(results, axis=0)


def mean_and_stderr(samples):
    """Sample mean and standard error along axis 0 (pairwise summation in numpy)."""
    samples = np.asarray(samples)
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(np.abs(mean), dtype=float)
    dev = samples - mean
    if not np.any(samples != samples[0]):
        return mean, np.zeros_like(np.abs(mean), dtype=float)
    var = (dev.real ** 2 + (dev.imag ** 2 if np.iscomplexobj(dev) else 0)).sum(axis=0) / (n - 1)
    return mean, np.sqrt(var / n)
