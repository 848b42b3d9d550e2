"""Deterministic random streams derived from one 64-bit seed.

A stream is addressed by a path of names and integers, e.g.
``stream(seed, "field", "init")`` or ``stream(seed, "enhance", 3)``. Each
path component is mapped to a 32-bit word (CRC-32 for strings, the value
itself for integers) and used as the ``spawn_key`` of a
:class:`numpy.random.SeedSequence` whose entropy is the seed. Streams with
different paths are statistically independent and the mapping never depends
on call order.
"""

from __future__ import annotations

import zlib

import numpy as np


def _word(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream indices must be non-negative")
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, *path) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(_word(p) for p in path))
    return np.random.Generator(np.random.PCG64(seq))


def child_seed(seed: int, *path) -> int:
    """A 64-bit integer seed for a sub-component."""
    return int(stream(seed, *path).integers(0, 2**63 - 1))
