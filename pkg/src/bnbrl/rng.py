"""SplitMix64 pseudo-random stream for instance generation.

A 64-bit counter-based generator (Steele, Lea & Flood 2014) with the usual
constants, so generated instance bytes are reproducible across platforms and
language runtimes without depending on numpy's generator internals.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB


def splitmix64(state: int) -> tuple[int, int]:
    """Advance the 64-bit state once; returns (new_state, output word)."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * MIX_1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_2) & MASK64
    z = z ^ (z >> 31)
    return state, z


class SplitMix64:
    """Sequential SplitMix64 stream seeded with a 64-bit value."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state, out = splitmix64(self._state)
        return out

    def uniform(self) -> float:
        """Uniform double in [0, 1) using the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] via rejection-free modulo on a 64-bit
        word (bias < 2^-50 for desk-scale ranges)."""
        span = hi - lo + 1
        if span <= 0:
            raise ValueError("empty range")
        return lo + self.next_u64() % span

    def choice_weighted(self, weights: list[float]) -> int:
        """Index sampled proportional to nonnegative weights."""
        total = sum(weights)
        u = self.uniform() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if u < acc:
                return i
        return len(weights) - 1

    def sample_without_replacement(self, population: int, k: int) -> list[int]:
        """k distinct indices from range(population), in selection order."""
        if k > population:
            raise ValueError("sample larger than population")
        chosen: list[int] = []
        taken = set()
        while len(chosen) < k:
            idx = self.randint(0, population - 1)
            if idx not in taken:
                taken.add(idx)
                chosen.append(idx)
        return chosen

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]
