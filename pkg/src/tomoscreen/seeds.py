"""Seed-derived random number streams.

Every stochastic component draws from its own counter-based (Philox)
generator keyed by a root seed plus a tuple of stream tags, so generation
order and thread scheduling cannot change results. String tags (case ids,
stream names) are hashed with blake2s to stable 64-bit words.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _key_words(keys: tuple) -> list[int]:
    words = []
    for key in keys:
        if isinstance(key, str):
            digest = hashlib.blake2s(key.encode("utf-8")).digest()
            words.append(int.from_bytes(digest[:8], "little"))
        elif isinstance(key, (int, np.integer)):
            words.append(int(key) & _MASK64)
        else:
            raise TypeError(f"stream key must be int or str, got {type(key).__name__}")
    return words


def rng_stream(*keys: int | str) -> np.random.Generator:
    """Return an independent Generator for the stream named by `keys`.

    Identical keys always yield an identical stream; distinct key tuples
    yield statistically independent streams.
    """
    if not keys:
        raise ValueError("at least one stream key is required")
    seq = np.random.SeedSequence(_key_words(tuple(keys)))
    return np.random.Generator(np.random.Philox(seq))


def mix_seed(*keys: int | str) -> int:
    """Collapse a key tuple into a single 63-bit seed (e.g. per-case seeds)."""
    if not keys:
        raise ValueError("at least one stream key is required")
    h = hashlib.blake2s()
    for word in _key_words(tuple(keys)):
        h.update(word.to_bytes(8, "little"))
    return int.from_bytes(h.digest()[:8], "little") >> 1
