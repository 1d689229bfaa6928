"""Fixed-capacity experience replay with oldest-first eviction."""

from __future__ import annotations

from typing import Any, Iterator

import numpy as np


class ReplayMemory:
    """Ring buffer of transitions sampled uniformly with replacement.

    Args:
        capacity: Maximum number of stored transitions.
        rng: Generator used for sampling; pass a seeded one for reproducibility.
    """

    def __init__(self, capacity: int, rng: np.random.Generator | None = None) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng()
        self._items: list[Any] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Any]:
        """Oldest to newest."""
        if len(self._items) < self.capacity:
            return iter(self._items)
        return iter(self._items[self._next :] + self._items[: self._next])

    def push(self, transition: Any) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def sample(self, k: int) -> list[Any]:
        if not self._items:
            raise IndexError("cannot sample from an empty replay memory")
        idx = self.rng.integers(0, len(self._items), size=k)
        return [self._items[i] for i in idx]
