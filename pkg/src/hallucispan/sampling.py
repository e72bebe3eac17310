"""Portable seeded sampling: SplitMix64 generator and Fisher-Yates shuffle.

The generator is fully specified here so that a given seed selects the same
exemplars on every platform and in every implementation:

    state <- state + 0x9E3779B97F4A7C15            (mod 2**64)
    z <- (state xor (state >> 30)) * 0xBF58476D1CE4E5B9
    z <- (z xor (z >> 27)) * 0x94D049BB133111EB
    output z xor (z >> 31)

Bounded draws use rejection sampling so every index is equally likely.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

from .errors import InsufficientData

T = TypeVar("T")
MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - (1 << 64) % n
        while True:
            x = self.next()
            if x < limit:
                return x % n


def shuffle(items: Sequence[T], seed: int) -> list[T]:
    """Fisher-Yates shuffle from the last position down."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def sample_shots(dataset: Sequence[T], k: int, seed: int) -> list[T]:
    """The first ``k`` items of the seeded shuffle of ``dataset``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > len(dataset):
        raise InsufficientData(f"cannot sample {k} shots from {len(dataset)} records")
    if k == 0:
        return []
    return shuffle(dataset, seed)[:k]
