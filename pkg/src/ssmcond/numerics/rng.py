"""Seeded, platform-independent random streams and parameter init."""

from __future__ import annotations

import math

import numpy as np


class Rng:
    """Counter-based Philox4x64 stream.

    The draw sequence for a given seed is fixed by the algorithm, not by the
    platform; ``tests/test_numerics.py`` pins test vectors.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def child(self, key: int) -> "Rng":
        # Deterministic substream: mixes the key into the seed with splitmix64 finalization.
        return Rng(_splitmix64(self.seed ^ _splitmix64(key + 1)))

    def uniform(self, low: float, high: float, shape=()) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def normal(self, shape=(), scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def raw_u64(self, n: int) -> np.ndarray:
        return self._gen.bit_generator.random_raw(n)


def _splitmix64(x: int) -> int:
    mask = 0xFFFFFFFFFFFFFFFF
    x = (x + 0x9E3779B97F4A7C15) & mask
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & mask
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & mask
    return x ^ (x >> 31)


def dense_init(rng: Rng, fan_in: int, fan_out: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out))


def conv_init(rng: Rng, channels: int, k: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(k)
    return rng.uniform(-bound, bound, (channels, k))
