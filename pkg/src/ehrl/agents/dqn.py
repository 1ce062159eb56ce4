"""Deep Q-learning pieces shared by the access-control and joint agents."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import (GradientSet, NetworkParams, NumericalFault, backward, clip_global_norm,
                  network_forward, sgd_step)
from .combinadic import DEFAULT_CAP, action_decode, action_encode, n_actions, subset_table
from .exploration import top_k


class ActionSpace:
    """Maps Q-network outputs to K-subsets of UEs.

    ``enumerated``: one output per subset, indexed by lexicographic rank.
    ``factorized``: one score per UE; Q(s, a) is the sum of the scores of the
    UEs in ``a``, so the greedy action is the top-K UEs.
    """

    def __init__(self, n: int, k: int, mode: str = "enumerated", cap: int = DEFAULT_CAP):
        if mode not in ("enumerated", "factorized"):
            raise ValueError(f"unknown action mode {mode!r}")
        self.n, self.k, self.mode = n, k, mode
        if mode == "enumerated":
            subset_table(n, k, cap)  # raises when C(N,K) exceeds the cap
            self.n_outputs = n_actions(n, k)
        else:
            self.n_outputs = n

    def greedy(self, q_row) -> tuple:
        q = np.asarray(q_row, dtype=float)
        if self.mode == "enumerated":
            return action_decode(int(np.argmax(q)), self.n, self.k)
        return tuple(int(i) for i in top_k(q, self.k))

    def random(self, rng: np.random.Generator) -> tuple:
        if self.mode == "enumerated":
            return action_decode(int(rng.integers(self.n_outputs)), self.n, self.k)
        return tuple(int(i) for i in np.sort(rng.choice(self.n, size=self.k, replace=False)))

    def select(self, q_row, epsilon: float, rng: np.random.Generator) -> tuple:
        if rng.random() < epsilon:
            return self.random(rng)
        return self.greedy(q_row)

    def index(self, action) -> int:
        return action_encode(action, self.n, self.k)

    def mask(self, actions) -> np.ndarray:
        """(B, n_outputs) 0/1 rows selecting the outputs that make up Q(s, a)."""
        m = np.zeros((len(actions), self.n_outputs))
        for r, a in enumerate(actions):
            if self.mode == "enumerated":
                m[r, self.index(a)] = 1.0
            else:
                m[r, list(a)] = 1.0
        return m

    def max_q(self, q_rows) -> np.ndarray:
        q = np.atleast_2d(np.asarray(q_rows, dtype=float))
        if self.mode == "enumerated":
            return q.max(axis=1)
        return np.sort(q, axis=1)[:, self.n - self.k:].sum(axis=1)


@dataclass
class AgentParams:
    """Online parameters plus a delayed target copy synced every ``sync_period`` updates."""
    online: NetworkParams
    target: NetworkParams
    sync_period: int = 100
    updates: int = 0

    @classmethod
    def create(cls, params: NetworkParams, sync_period: int = 100) -> "AgentParams":
        return cls(params, params.copy(), sync_period)

    def after_update(self) -> None:
        self.updates += 1
        if self.updates % self.sync_period == 0:
            self.target.assign(self.online)


def dqn_target(reward, gamma: float, q_next, terminal: bool) -> float:
    """``r`` at a terminal step, else ``r + gamma * max(q_next)``."""
    if terminal:
        return float(reward)
    return float(reward + gamma * np.max(np.asarray(q_next, dtype=float)))


def td_targets(rewards, gamma: float, max_next, terminals) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    return r + gamma * np.asarray(max_next, dtype=float) * (1.0 - np.asarray(terminals, dtype=float))


def stack_states(states) -> np.ndarray:
    return np.ascontiguousarray(np.stack(states).astype(float))


def q_loss_and_grad(params: NetworkParams, states, masks, targets):
    """Mean squared TD error and its gradient w.r.t. ``params`` and the inputs."""
    out, cache = network_forward(states, params, return_cache=True)
    q_sa = np.sum(out * masks, axis=1)
    err = q_sa - targets
    loss = float(np.mean(err ** 2))
    if not np.isfinite(loss):
        raise NumericalFault(f"non-finite Q loss (max |Q| = {np.max(np.abs(out))})")
    d_out = masks * (2.0 * err / len(err))[:, None]
    grads, dx = backward(cache, d_out, params)
    return loss, grads, dx


def dqn_update(batch, agent: AgentParams, alpha: float, gamma: float, space: ActionSpace,
               grad_clip: float | None = 10.0) -> float:
    """One SGD step on the mean of ``(y - Q(s, a))**2`` over ``batch``.

    ``batch`` items carry ``state``/``next_state`` sequences (T, D), ``action`` a
    UE subset, a scalar ``reward`` and ``terminal``. Returns the batch loss.
    """
    if not batch:
        raise ValueError("empty batch")
    states = stack_states([b.state for b in batch])
    nexts = stack_states([b.next_state for b in batch])
    q_next = network_forward(nexts, agent.target)
    y = td_targets([b.reward for b in batch], gamma, space.max_q(q_next), [b.terminal for b in batch])
    masks = space.mask([b.action for b in batch])
    loss, grads, _ = q_loss_and_grad(agent.online, states, masks, y)
    if grad_clip is not None:
        grads = clip_global_norm(grads, grad_clip)
    sgd_step(agent.online, grads, alpha)
    agent.after_update()
    return loss


__all__ = ["ActionSpace", "AgentParams", "GradientSet", "dqn_target", "dqn_update", "td_targets",
           "q_loss_and_grad", "stack_states"]
