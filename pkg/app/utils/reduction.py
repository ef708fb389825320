"""Fixed-order block evaluation and pairwise reduction.

Work is split into blocks of a fixed size that does not depend on the worker count, blocks
are evaluated on a thread pool, and results are concatenated in block order before a single
pairwise reduction. The reduced value is therefore bit-identical for any number of threads.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional

import numpy as np

from ..config import get_settings

logger = logging.getLogger(__name__)

BLOCK_SIZE = 4096


def pairwise_sum(values: np.ndarray) -> np.ndarray:
    """Sum along axis 0 with numpy's pairwise summation.

    The node axis is moved last and made contiguous, which is the layout numpy reduces
    pairwise; reducing along a strided axis would fall back to naive accumulation.
    """
    arr = np.ascontiguousarray(np.moveaxis(np.asarray(values, dtype=float), 0, -1))
    return np.add.reduce(arr, axis=-1)


def map_blocks(
    fn: Callable[[slice], np.ndarray],
    n_items: int,
    threads: Optional[int] = None,
    block_size: int = BLOCK_SIZE,
) -> List[np.ndarray]:
    """Evaluate `fn` on consecutive slices of range(n_items); results come back in order."""
    threads = threads or get_settings().THREADS
    blocks = [slice(start, min(start + block_size, n_items)) for start in range(0, n_items, block_size)]
    if threads <= 1 or len(blocks) <= 1:
        return [fn(block) for block in blocks]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, blocks))

