"""Deterministic PRNG for reproducible verification inputs.

The generator is normative so that divergence summaries are bit-stable
across platforms: a SplitMix64 pass expands the user seed into the
state of an xorshift64* generator, and each 64-bit output is mapped to
a float in [-1, 1) using its top 53 bits. Everything is defined over
exact 64-bit unsigned arithmetic.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xorshift64Star:
    """xorshift64* seeded via SplitMix64; never reaches the zero state."""

    def __init__(self, seed: int):
        state, z = splitmix64(seed & _MASK)
        self._x = z if z != 0 else 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self._x
        x ^= (x >> 12)
        x = (x ^ (x << 25)) & _MASK
        x ^= (x >> 27)
        self._x = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def next_unit(self) -> float:
        """Uniform in [-1, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) / (1 << 52) - 1.0

    def uniform(self, shape: tuple[int, ...]) -> np.ndarray:
        """Float32 array of uniform [-1, 1) samples in row-major order."""
        count = int(np.prod(shape, dtype=np.int64))
        vals = np.fromiter(
            (self.next_unit() for _ in range(count)), dtype=np.float64, count=count
        )
        return vals.astype(np.float32).reshape(shape)
