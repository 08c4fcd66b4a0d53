"""Prioritized experience replay over assembled transitions.

Sampling probability is proportional to (|td_error| + min_priority)^alpha
via a binary sum-tree; importance weights (N*P)^-beta are normalized by the
batch maximum, with beta annealed linearly from 0.4 to 1.0 over the first
100k learner steps. Fresh transitions enter at the maximum priority seen so
far so nothing waits forever for its first replay.
"""

from __future__ import annotations

import numpy as np

from .targets import ReplayTransition


class SumTree:
    """Fixed-capacity binary sum-tree over nonnegative weights."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        size = 1
        while size < capacity:
            size *= 2
        self._leaf_base = size
        self._tree = np.zeros(2 * size)

    def set(self, index: int, weight: float) -> None:
        if not 0 <= index < self.capacity:
            raise IndexError(index)
        pos = self._leaf_base + index
        delta = weight - self._tree[pos]
        while pos >= 1:
            self._tree[pos] += delta
            pos //= 2

    def get(self, index: int) -> float:
        return float(self._tree[self._leaf_base + index])

    def total(self) -> float:
        return float(self._tree[1])

    def find(self, mass: float) -> int:
        """Index of the leaf where the running prefix sum reaches `mass`."""
        pos = 1
        while pos < self._leaf_base:
            left = 2 * pos
            if mass <= self._tree[left] or self._tree[left + 1] == 0.0:
                pos = left
            else:
                mass -= self._tree[left]
                pos = left + 1
        return min(pos - self._leaf_base, self.capacity - 1)


class ReplayBuffer:
    def __init__(self, capacity: int = 100_000, min_fill: int = 20_000,
                 alpha: float = 0.6, beta_init: float = 0.4,
                 beta_final: float = 1.0, beta_steps: int = 100_000,
                 min_priority: float = 1e-3):
        self.capacity = capacity
        self.min_fill = min_fill
        self.alpha = alpha
        self.beta_init = beta_init
        self.beta_final = beta_final
        self.beta_steps = beta_steps
        self.min_priority = min_priority
        self._storage: list[ReplayTransition | None] = [None] * capacity
        self._tree = SumTree(capacity)
        self._pos = 0
        self._size = 0
        self._max_raw = 1.0

    def __len__(self) -> int:
        return self._size

    @property
    def ready(self) -> bool:
        return self._size >= self.min_fill

    def beta(self, learner_step: int) -> float:
        frac = min(learner_step / self.beta_steps, 1.0)
        return self.beta_init + (self.beta_final - self.beta_init) * frac

    def _weight(self, raw_priority: float) -> float:
        return (raw_priority + self.min_priority) ** self.alpha

    def add(self, transition: ReplayTransition) -> None:
        self._storage[self._pos] = transition
        self._tree.set(self._pos, self._weight(self._max_raw))
        self._pos = (self._pos + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator,
               learner_step: int) -> tuple[list[ReplayTransition], np.ndarray, np.ndarray]:
        """Stratified proportional sample; returns (transitions, importance
        weights normalized by the batch max, leaf indices)."""
        if not self.ready:
            raise ValueError(f"buffer holds {self._size} < min_fill {self.min_fill}")
        total = self._tree.total()
        segment = total / batch_size
        indices = np.empty(batch_size, dtype=np.int64)
        probs = np.empty(batch_size)
        for i in range(batch_size):
            u = (i + rng.uniform()) * segment
            idx = self._tree.find(u)
            if self._storage[idx] is None:  # numerical edge at the ring seam
                idx = (idx - 1) % self._size
            indices[i] = idx
            probs[i] = self._tree.get(idx) / total
        beta = self.beta(learner_step)
        weights = (self._size * probs) ** (-beta)
        weights /= weights.max()
        return [self._storage[i] for i in indices], weights, indices

    def update_priorities(self, indices: np.ndarray, td_errors: np.ndarray) -> None:
        for idx, err in zip(indices, td_errors):
            raw = abs(float(err))
            self._max_raw = max(self._max_raw, raw)
            self._tree.set(int(idx), self._weight(raw))
