"""
Seeded random streams.

Every stochastic component draws from a Philox (counter-based) generator
keyed by ``(master seed, component tag, run index)``, so results do not
depend on how runs are split across workers.
"""
from __future__ import annotations

import zlib

import numpy as np


def tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str = "", index: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, tag, index) triple."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, tag_id(tag), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def as_generator(seed, tag: str = "", index: int = 0) -> np.random.Generator:
    """Accept an int seed or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(int(seed), tag, index)
