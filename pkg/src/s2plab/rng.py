"""Named deterministic RNG streams.

Every stochastic component owns its own stream so that adding or removing a
consumer elsewhere never perturbs the draw sequence of an existing one.
Streams derive children by name, so a run is fully determined by one root seed.
"""
from __future__ import annotations

import zlib

import numpy as np


class RngStream:
    """A deterministic generator identified by a root seed and a name path."""

    def __init__(self, key: tuple[int, ...]):
        self.key = tuple(int(k) for k in key)
        self.gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.key)))

    @classmethod
    def from_seed(cls, seed: int) -> "RngStream":
        return cls((int(seed),))

    def child(self, name: str) -> "RngStream":
        """Derive an independent stream; same (seed, name) always gives the same stream."""
        return RngStream(self.key + (zlib.crc32(name.encode()),))

    # -- draws ---------------------------------------------------------------

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def bernoulli(self, p: float) -> bool:
        return bool(self.gen.random() < p)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def choice(self, n, size, replace=True):
        return self.gen.choice(n, size=size, replace=replace)

    def gumbel(self, size) -> np.ndarray:
        # -log(-log(u)) with u clamped away from {0, 1} to keep the noise finite
        u = np.clip(self.gen.random(size), 1e-12, 1.0 - 1e-12)
        return -np.log(-np.log(u))

    # -- state ---------------------------------------------------------------

    def get_state(self) -> dict:
        return {"key": list(self.key), "state": self.gen.bit_generator.state}

    @classmethod
    def from_state(cls, state: dict) -> "RngStream":
        rng = cls(tuple(state["key"]))
        rng.gen.bit_generator.state = state["state"]
        return rng
