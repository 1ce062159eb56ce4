"""Epsilon schedules and epsilon-greedy selection."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.05
    decay_steps: int = 10000

    def __post_init__(self):
        if not 0.0 <= self.end <= self.start <= 1.0:
            raise ValueError(f"need 0 <= end <= start <= 1, got {self.start}, {self.end}")
        if self.decay_steps < 0:
            raise ValueError("decay_steps must be nonnegative")

    def __call__(self, step: int) -> float:
        if self.decay_steps == 0 or step >= self.decay_steps:
            return self.end
        return self.start + (self.end - self.start) * step / self.decay_steps


def greedy(q_values) -> int:
    """Index of the largest Q-value, ties to the lowest index."""
    q = np.asarray(q_values, dtype=float)
    if q.size == 0:
        raise ValueError("empty Q-value row")
    return int(np.argmax(q))


def epsilon_greedy_select(q_values, epsilon: float, rng: np.random.Generator) -> int:
    q = np.asarray(q_values, dtype=float).reshape(-1)
    if q.size == 0:
        raise ValueError("empty Q-value row")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    # one uniform draw per call keeps the rng stream independent of q
    if rng.random() < epsilon:
        return int(rng.integers(q.size))
    return greedy(q)


def top_k(scores, k: int) -> np.ndarray:
    """Sorted indices of the k largest scores, ties to lower indices."""
    s = np.asarray(scores, dtype=float)
    order = np.argsort(-s, kind="stable")
    return np.sort(order[:k])
