from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional
import os

import numpy as np

# Fixed number of rows per block: the partition never depends on the thread count
BLOCK_ROWS = 4096


def default_threads() -> int:
    return os.cpu_count() or 1


def blocked_map(
    fn: Callable[[np.ndarray], np.ndarray],
    rows: np.ndarray,
    threads: Optional[int] = None,
    block_rows: int = BLOCK_ROWS,
) -> np.ndarray:
    """Apply ``fn`` to fixed row blocks of ``rows`` and concatenate in order."""
    n = len(rows)
    if n <= block_rows:
        return fn(rows)

    blocks: List[np.ndarray] = [rows[i : i + block_rows] for i in range(0, n, block_rows)]
    threads = threads or default_threads()
    if threads <= 1:
        results = [fn(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, blocks))
    return np.concatenate(results, axis=0)


def spawn_generators(seed: int, count: int) -> List[np.random.Generator]:
    """Independent, reproducible generators derived from one 64-bit seed."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.default_rng(child) for child in children]
