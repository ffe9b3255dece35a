"""Named, counter-based random substreams.

All randomness in the package flows from one 64-bit master seed. Each
consumer derives an independent generator from ``(seed, tag)`` or
``(seed, tag, index)``; the Philox key is a stable hash of seed and tag
with the index in the low key word. Streams are therefore independent of
thread scheduling and of the order in which consumers run, and a given
(seed, tag, index) triple yields the same draws on every platform.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def _stream_word(seed: int, tag: str) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", seed & _MASK64))
    h.update(tag.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def stream_key(seed: int, tag: str, index: int = 0) -> int:
    """128-bit Philox key for the (seed, tag, index) substream."""
    return (_stream_word(seed, tag) << 64) | (index & _MASK64)


def substream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Generator for the named substream, independent across tags and indices."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, tag, index)))
