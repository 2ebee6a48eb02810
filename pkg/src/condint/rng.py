"""Counter-based random streams.

Every stream is a Philox generator keyed by a tuple of integers, so a
replication's randomness depends only on ``(master_seed, tag, index)`` and
never on execution order.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def generator(seed: int, *keys: int | str) -> np.random.Generator:
    """Return a Philox generator for ``seed`` and an optional key path.

    ``generator(seed)`` is the root stream used by the simulators;
    ``generator(seed, "coverage", b)`` is the substream of replication ``b``.
    """
    if not keys:
        return np.random.Generator(np.random.Philox(int(seed) & _MASK64))
    words = [int(seed) & _MASK64]
    for k in keys:
        words.append(tag_key(k) if isinstance(k, str) else int(k) & _MASK64)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def substream_seed(seed: int, *keys: int | str) -> int:
    """Derive a 64-bit seed for a substream, for APIs that take a plain seed."""
    words = [int(seed) & _MASK64]
    for k in keys:
        words.append(tag_key(k) if isinstance(k, str) else int(k) & _MASK64)
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
