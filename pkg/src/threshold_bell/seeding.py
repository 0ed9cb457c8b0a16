"""Keyed random streams and order-preserving parallel map.

Streams are derived from ``(master seed, key...)`` through
``numpy.random.SeedSequence`` spawn keys, so a unit of work always gets
the same stream no matter which other units exist or how they are
scheduled.
"""

from __future__ import annotations

import struct
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from typing import TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

#: Trials per chunk; the chunk is the smallest seeded unit, so this is fixed.
CHUNK_SIZE = 1 << 16

TAG_TRIALS = 1
TAG_CURVE = 2
TAG_SWEEP = 3
TAG_PATTERN = 4


def float_key(x: float) -> int:
    """Bit pattern of a double as a non-negative int (with -0.0 folded onto 0.0)."""
    return struct.unpack("<Q", struct.pack("<d", float(x) + 0.0))[0]


def seed_sequence(seed: int, key: Sequence[int] = ()) -> np.random.SeedSequence:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))


def generator(seed: int, key: Sequence[int] = ()) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, key)))


def chunk_sizes(n_trials: int, chunk: int = CHUNK_SIZE) -> list[int]:
    full, rest = divmod(n_trials, chunk)
    return [chunk] * full + ([rest] if rest else [])


def parallel_map(fn: Callable[[T], R], items: Iterable[T], n_jobs: int = 1) -> list[R]:
    """``list(map(fn, items))``, optionally over a process pool; result order is preserved."""
    items = list(items)
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))
