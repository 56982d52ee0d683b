"""
Counter-based random streams and block fan-out

Paths are grouped in fixed-size blocks. Block b of stream s draws from
Philox(SeedSequence(seed, spawn_key=(s, b))), so every path sees the same
numbers no matter how many worker threads run or in which order blocks
finish.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Tuple, TypeVar

import numpy as np

from homogenization.errors import SimulationParameterError

logger = logging.getLogger(__name__)

T = TypeVar('T')

STREAMS = {
    'eps_paths': 1,
    'exit': 2,
    'occupation': 3,
    'unscaled_exit': 4,
    'skew': 5,
    'limit': 6,
    'cell_masses': 7,
    'drift_integral': 8,
    'short_occupation': 9,
}

DEFAULT_BLOCK_SIZE = 512


def block_generator(seed: int, stream: str, block: int) -> np.random.Generator:
    if seed < 0:
        raise SimulationParameterError(f"Seed must be non-negative, got {seed}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[stream], int(block)))
    return np.random.Generator(np.random.Philox(sequence))


def block_bounds(n: int, block_size: int) -> List[Tuple[int, int]]:
    if n < 1:
        raise SimulationParameterError(f"Need at least one path, got {n}")
    if block_size < 1:
        raise SimulationParameterError(f"Block size must be positive, got {block_size}")
    return [(lo, min(lo + block_size, n)) for lo in range(0, n, block_size)]


def run_blocks(worker: Callable[[int, np.random.Generator], T], n: int, seed: int, stream: str,
               block_size: int = DEFAULT_BLOCK_SIZE, threads: int = 1) -> List[T]:
    """
    Run worker(size, rng) for every block and return the results in block order
    """
    bounds = block_bounds(n, block_size)

    def task(index: int) -> T:
        lo, hi = bounds[index]
        return worker(hi - lo, block_generator(seed, stream, index))

    if threads <= 1 or len(bounds) == 1:
        return [task(i) for i in range(len(bounds))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, range(len(bounds))))
