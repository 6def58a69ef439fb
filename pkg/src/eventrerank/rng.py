"""Reproducible random streams.

Every stream is a Philox (counter-based) generator keyed by a root seed and a
path of integers. Children are derived with ``SeedSequence`` spawn keys, so a
substream depends only on its path, never on how many draws the parent made.
"""

from __future__ import annotations

import zlib

import numpy as np

ALGORITHM = "philox4x64"


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class RngStream:
    __slots__ = ("seed", "key")

    def __init__(self, seed: int, key: tuple = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.key = tuple(int(k) for k in key)

    algorithm = ALGORITHM

    def spawn(self, n: int) -> "RngStream":
        return RngStream(self.seed, self.key + (n,))

    def named(self, name: str) -> "RngStream":
        return self.spawn(_name_key(name))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))

    def __eq__(self, other):
        return isinstance(other, RngStream) and (self.seed, self.key) == (other.seed, other.key)

    def __hash__(self):
        return hash((self.seed, self.key))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(rng).generator()


def as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"expected RngStream or int seed, got {type(rng).__name__}")
