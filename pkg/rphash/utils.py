"""
Utility functions for the random projection hash toolkit
"""

import math
import re
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

import config
from .errors import PreconditionError

_UINT64_MASK = (1 << 64) - 1


def keyed_generator(seed: int, stream: int, index: int = 0, counter: int = 0) -> np.random.Generator:
    """
    Build a counter-based generator keyed on (seed, stream, index)

    The Philox key packs the 64-bit seed with a stream tag and a work-unit
    index, so any unit of work can be regenerated on its own.

    Args:
        seed: 64-bit reproducibility seed
        stream: Stream tag from config.STREAMS
        index: Work-unit index inside the stream (instance, block, ...)
        counter: Starting Philox counter (selects a sub-stream)

    Returns:
        numpy Generator backed by Philox
    """
    if seed < 0 or seed > _UINT64_MASK:
        raise PreconditionError(f"seed must fit in 64 unsigned bits, got {seed}")
    tag = ((stream & 0xFFFF) << 48) | (index & ((1 << 48) - 1))
    key = seed | (tag << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def stable_sum(values: Iterable[float]) -> float:
    """Exactly rounded sum, independent of summation order"""
    return math.fsum(float(v) for v in values)


def split_blocks(total: int, block: int = config.TRIAL_BLOCK) -> list:
    """
    Split a trial count into fixed-size work units

    Args:
        total: Number of trials
        block: Work-unit size

    Returns:
        List of (block_index, size) pairs
    """
    blocks = []
    start = 0
    index = 0
    while start < total:
        size = min(block, total - start)
        blocks.append((index, size))
        start += size
        index += 1
    return blocks


def clean_filename(prefix: str) -> str:
    """Artifact prefix (built from flag values) made safe as a file name"""
    return re.sub(r'[<>:"/\\|?*\s]', "_", prefix).strip(" .")


def ensure_dir(directory: Path) -> Path:
    """Create the output directory (and parents) on first use"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def resolve_workers(workers: Optional[int]) -> int:
    """Worker count for a parallel run (config.WORKERS when unset)"""
    if workers is None:
        return max(1, config.WORKERS)
    return max(1, int(workers))
