"""Seeded, partitionable Monte Carlo driver.

Trials are cut into fixed-size blocks. Block ``b`` always draws from the
stream ``SeedSequence(seed, spawn_key=(b,))``, so the merged result depends
only on (seed, total, block_size), never on how blocks are spread over
workers. Block results are merged in block order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Any, Callable

import numpy as np

DEFAULT_SEED = 20170401
DEFAULT_BLOCK = 1024


def block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=(int(block),))
    return np.random.Generator(np.random.PCG64(ss))


def block_sizes(total: int, block_size: int) -> list[int]:
    n_full, rest = divmod(int(total), int(block_size))
    return [block_size] * n_full + ([rest] if rest else [])


def _run_range(fn, seed, sizes, first, last, args):
    return [fn(block_rng(seed, b), sizes[b], *args) for b in range(first, last)]


def run_blocks(
    fn: Callable[..., Any],
    total: int,
    seed: int,
    args: tuple = (),
    block_size: int = DEFAULT_BLOCK,
    workers: int = 1,
) -> list[Any]:
    """Call ``fn(rng, n, *args)`` once per block and return results in block order.

    ``fn`` must be a module-level function when ``workers > 1``.
    """
    if total < 1:
        raise ValueError("total must be >= 1")
    sizes = block_sizes(total, block_size)
    n_blocks = len(sizes)
    workers = max(1, min(int(workers), n_blocks))
    if workers == 1:
        return _run_range(fn, seed, sizes, 0, n_blocks, args)
    edges = np.linspace(0, n_blocks, workers + 1).round().astype(int)
    job = partial(_run_range, fn, seed, sizes)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(job, int(a), int(b), args) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        out = []
        for f in futures:
            out.extend(f.result())
    return out
