"""Named, counter-based random streams.

Every stochastic operation in the package draws from a Philox generator
keyed by an explicit 64-bit seed plus a tuple of string/int tags, so the
same (seed, tags) always reproduces the same values and disjoint tags
give statistically independent streams.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, *tags: str | int) -> int:
    """Derive a 128-bit Philox key from a seed and a tag path."""
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed).to_bytes(8, "little", signed=False))
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def stream(seed: int, *tags: str | int) -> np.random.Generator:
    """Generator for the named substream of `seed`."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *tags)))
