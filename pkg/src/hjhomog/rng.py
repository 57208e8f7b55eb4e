"""Seeded random streams keyed by ``(seed, purpose tags...)``.

Each purpose gets an independent stream, so adding a new consumer never
shifts the numbers drawn by an existing one.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_word(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        # negative tile indices are legitimate tags
        return int(tag) % (1 << 32)
    return zlib.crc32(str(tag).encode())


def stream(seed: int, *tags) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed) % (1 << 64), spawn_key=tuple(_tag_word(t) for t in tags))
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(seed: int, *tags) -> int:
    """A 64-bit seed derived from ``seed`` and the tags."""
    return int(stream(seed, "derive", *tags).integers(0, 1 << 63))


def realization_seeds(base_seed: int, count: int, offset: int = 0) -> list[int]:
    return [derive_seed(base_seed, "realization", offset + i) for i in range(count)]
