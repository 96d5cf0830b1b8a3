"""Deterministic worker-pool plumbing for trial batches.

Trials are split into contiguous index blocks; each block is computed by a
worker thread and results are concatenated in block order.  Because every
trial derives its own random streams from (master seed, trial index), the
merged output is byte-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")


def map_blocks(trials: int, jobs: int, block_fn: Callable[[int, int], T]) -> list[T]:
    """Apply block_fn(lo, hi) over a partition of range(trials), in order."""
    if trials < 0:
        raise ValueError("trial count must be >= 0")
    jobs = max(1, int(jobs))
    if jobs == 1 or trials <= 1:
        return [block_fn(0, trials)]
    n_blocks = min(trials, 4 * jobs)
    bounds = [trials * i // n_blocks for i in range(n_blocks + 1)]
    spans = [(bounds[i], bounds[i + 1]) for i in range(n_blocks) if bounds[i] < bounds[i + 1]]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(block_fn, lo, hi) for lo, hi in spans]
        return [f.result() for f in futures]


def concat_rows(blocks: Sequence[list]) -> list:
    out: list = []
    for b in blocks:
        out.extend(b)
    return out
