"""Two-layer network for joint prediction and access control.

The prediction layer phi_B reads the history sequence and emits battery
estimates b_t; the control layer phi_A reads (b_t / C, scaled gains) and emits
Q-values. Training descends the TD loss through both layers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import GradientSet, NetworkParams, NumericalFault, backward, network_forward, sgd_step
from .dqn import ActionSpace, td_targets
from .features import control_input
from .predictor import to_batteries


def joint_reward(rate: float, p_loss: float, beta: float = 100.0) -> float:
    return float(rate - beta * p_loss)


@dataclass(eq=False)
class JointParams:
    a: NetworkParams  # control layer
    b: NetworkParams  # prediction layer

    def copy(self) -> "JointParams":
        return JointParams(self.a.copy(), self.b.copy())

    def assign(self, other: "JointParams") -> None:
        self.a.assign(other.a)
        self.b.assign(other.b)

    def arrays(self):
        return self.a.arrays() + self.b.arrays()


@dataclass
class JointAgent:
    online: JointParams
    target: JointParams
    sync_period: int = 100
    updates: int = 0

    @classmethod
    def create(cls, params: JointParams, sync_period: int = 100) -> "JointAgent":
        return cls(params, params.copy(), sync_period)

    def after_update(self) -> None:
        self.updates += 1
        if self.updates % self.sync_period == 0:
            self.target.assign(self.online)


def _batched(seq, gains):
    seq = np.asarray(seq, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if seq.ndim == 2:
        seq = seq[None]
    if gains.ndim == 1:
        gains = gains[None]
    if seq.shape[0] != gains.shape[0]:
        raise ValueError(f"batch sizes differ: history {seq.shape}, gains {gains.shape}")
    return seq, gains


def joint_forward(seq, gains_scaled, params: JointParams, capacity: float, return_cache: bool = False):
    """``(b, q)``: battery estimates in battery units (B, N) and Q-values (B, L).

    ``seq`` is the history sequence (W, 2N + K) or a batch of them and
    ``gains_scaled`` the matching scaled channel gains.
    """
    seq, gains = _batched(seq, gains_scaled)
    out_b, cache_b = network_forward(seq, params.b, return_cache=True)
    b, slope = to_batteries(out_b, capacity, params.b.activation)
    if b.shape != gains.shape:
        raise ValueError(f"prediction width {b.shape[1]} does not match {gains.shape[1]} gains")
    xa = control_input(b / capacity, gains)
    q, cache_a = network_forward(xa, params.a, return_cache=True)
    if not return_cache:
        return b, q
    return b, q, (cache_a, cache_b, slope)


def joint_loss_and_grad(params: JointParams, seqs, gains, masks, targets, capacity: float,
                        reports=None, actions=None, pred_weight: float = 0.0):
    """Loss ``mean((Q(s,a) - y)**2) + pred_weight * mean(sum_k ((b_k - R_k) / C)**2)``
    and its gradient w.r.t. both layers, the TD part taken through the full chain."""
    b, q, (cache_a, cache_b, slope) = joint_forward(seqs, gains, params, capacity, return_cache=True)
    nb = len(targets)
    err = np.sum(q * masks, axis=1) - targets
    loss = float(np.mean(err ** 2))
    d_q = masks * (2.0 * err / nb)[:, None]
    grads_a, dxa = backward(cache_a, d_q, params.a)
    n = b.shape[1]
    d_b = dxa[:, 0, :n] / capacity
    if pred_weight > 0.0 and reports is not None:
        idx = np.asarray(actions)
        rows = np.arange(nb)[:, None]
        perr = (b[rows, idx] - reports) / capacity
        loss += pred_weight * float(np.mean(np.sum(perr ** 2, axis=1)))
        np.add.at(d_b, (np.repeat(np.arange(nb), idx.shape[1]), idx.ravel()),
                  (pred_weight * 2.0 * perr / (capacity * nb)).ravel())
    if not np.isfinite(loss):
        raise NumericalFault(f"non-finite joint loss (max |Q| = {np.max(np.abs(q))})")
    grads_b, _ = backward(cache_b, d_b * slope, params.b)
    return loss, grads_a, grads_b


def _clip_pair(ga: GradientSet, gb: GradientSet, max_norm):
    if max_norm is None:
        return ga, gb
    norm = float(np.sqrt(ga.norm() ** 2 + gb.norm() ** 2))
    if norm <= max_norm or norm == 0.0:
        return ga, gb
    s = max_norm / norm
    return ga.scale(s), gb.scale(s)


def joint_update(batch, agent: JointAgent, alpha: float, gamma: float, space: ActionSpace,
                 capacity: float, pred_weight: float = 0.0, grad_clip: float | None = 10.0,
                 freeze_b: bool = False, alpha_b: float | None = None) -> float:
    """One SGD step on both layers; returns the batch loss.

    Items carry ``state`` and ``next_state`` as ``(history sequence, scaled
    gains)`` pairs, the scheduled subset as ``action``, a scalar ``reward``
    and the reported batteries of the scheduled UEs in ``extra``. ``alpha_b``
    sets a separate step size for the prediction layer.
    """
    if not batch:
        raise ValueError("empty batch")
    seqs = np.stack([t.state[0] for t in batch])
    gains = np.stack([t.state[1] for t in batch])
    _, q_next = joint_forward(np.stack([t.next_state[0] for t in batch]),
                              np.stack([t.next_state[1] for t in batch]), agent.target, capacity)
    y = td_targets([t.reward for t in batch], gamma, space.max_q(q_next), [t.terminal for t in batch])
    actions = [tuple(t.action) for t in batch]
    reports = None
    if pred_weight > 0.0:
        reports = np.stack([np.asarray(t.extra, dtype=float) for t in batch])
    loss, ga, gb = joint_loss_and_grad(agent.online, seqs, gains, space.mask(actions), y, capacity,
                                       reports, actions, pred_weight)
    if freeze_b:
        gb = GradientSet.zeros_like(agent.online.b)
    ga, gb = _clip_pair(ga, gb, grad_clip)
    sgd_step(agent.online.a, ga, alpha)
    if not freeze_b:
        sgd_step(agent.online.b, gb, alpha if alpha_b is None else alpha_b)
    agent.after_update()
    return loss
