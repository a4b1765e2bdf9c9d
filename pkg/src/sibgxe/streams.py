"""Deterministic, splittable random streams.

Every stochastic unit of work (one family, one permutation replicate, one
split of the discovery sample) draws from its own substream keyed by
``(seed, purpose_tag, *indices)``.  Substreams are derived through
``numpy.random.SeedSequence`` spawn keys, so any parallel schedule that
assigns units to workers reproduces the serial output bit for bit.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_key(tag: str) -> int:
    # CRC32 is stable across platforms and Python versions (unlike hash()).
    return zlib.crc32(tag.encode("utf-8"))


def substream(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Return the generator for the unit identified by ``(tag, *indices)``.

    The same ``(seed, tag, indices)`` triple always yields an identical
    stream, independent of platform, worker count, or call order.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=(_tag_key(tag), *map(int, indices)))
    return np.random.Generator(np.random.Philox(ss))
