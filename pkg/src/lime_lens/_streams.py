"""Counter-based random streams and an order-preserving thread map.

Randomness for block ``b`` of a run seeded with ``seed`` comes from a Philox
generator keyed by ``seed`` whose 256-bit counter starts at ``b << 192``.
Blocks therefore never overlap and do not depend on how work is scheduled.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import UsageError

THREADS_ENV = "LIME_LENS_THREADS"
BLOCK_ROWS = 4096
_U64 = 2**64


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise UsageError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def block_generator(seed: int, block: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=check_seed(seed), counter=[0, 0, 0, int(block)])
    return np.random.Generator(bitgen)


def derive_seed(seed: int, *keys: int) -> int:
    """A child seed for ``(seed, *keys)``, e.g. one repetition of an experiment."""
    ss = np.random.SeedSequence([check_seed(seed), *(int(k) for k in keys)])
    return int(ss.generate_state(1, np.uint64)[0])


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                workers = int(env)
            except ValueError:
                raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        else:
            workers = os.cpu_count() or 1
    if workers < 1:
        raise UsageError(f"worker count must be positive, got {workers}")
    return workers


def ordered_map(fn, items, workers: int | None = None) -> list:
    """``[fn(item) for item in items]`` possibly on a thread pool; result order
    always follows ``items``."""
    items = list(items)
    workers = min(worker_count(workers), max(len(items), 1))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def blocks(n: int, size: int = BLOCK_ROWS) -> list[tuple[int, int, int]]:
    """``(block_index, start, stop)`` triples covering ``range(n)``."""
    return [(b, start, min(start + size, n)) for b, start in enumerate(range(0, n, size))]
