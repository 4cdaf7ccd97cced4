"""Counter-based random streams keyed by (seed, stream tag, step, path block).

Each block of ``BLOCK_SIZE`` consecutive paths at one step draws from its own
Philox generator, so results do not depend on how blocks are spread over
worker threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK_SIZE = 8192
GENERATOR_ID = "numpy.Philox4x64/SeedSequence"

# stream tags keep unrelated consumers of one seed apart
STREAM_SIMULATE = 0
STREAM_LLN_TRUNCATION = 1
STREAM_LLN_COUNTING = 2
STREAM_TEST = 3


def stream(seed: int, tag: int, step: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tag), int(step), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n_paths: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int, int]]:
    """``(block index, start, stop)`` covering ``range(n_paths)``."""
    return [(i, s, min(s + block_size, n_paths))
            for i, s in enumerate(range(0, n_paths, block_size))]


def n_workers() -> int:
    env = os.environ.get("NUMKIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def map_blocks(fn, n_paths: int, block_size: int = BLOCK_SIZE) -> list:
    """Apply ``fn(block, start, stop)`` to every block; results in block order."""
    pending = blocks(n_paths, block_size)
    workers = min(n_workers(), len(pending))
    if workers <= 1:
        return [fn(*b) for b in pending]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), pending))
