"""Uniform experience replay."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np


@dataclass
class Transition:
    state: Any
    action: Any
    reward: Any
    next_state: Any
    terminal: bool = False
    extra: Any = None


class ReplayBuffer:
    """Bounded FIFO ring; sampling is uniform with replacement."""

    def __init__(self, capacity: int = 100000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        """Oldest first."""
        if len(self._items) < self.capacity:
            return iter(list(self._items))
        return iter(self._items[self._next:] + self._items[:self._next])

    def push(self, transition) -> "ReplayBuffer":
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
            self._next = (self._next + 1) % self.capacity
        return self

    def sample(self, batch_size: int, rng: np.random.Generator) -> list:
        if not self._items:
            raise IndexError("cannot sample from an empty replay buffer")
        idx = rng.integers(len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


def replay_push(buffer: ReplayBuffer, transition) -> ReplayBuffer:
    return buffer.push(transition)


def replay_sample(buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> list:
    return buffer.sample(batch_size, rng)
