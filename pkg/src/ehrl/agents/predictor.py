"""LSTM battery predictor: history memory, forward pass and TD(0) updates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import NetworkParams, NumericalFault, backward, clip_global_norm, network_forward, sgd_step


@dataclass(frozen=True, eq=False)
class HistoryWindow:
    """Last W slots of scheduling indicators X (N, W), predictions M (N, W) and
    reported batteries of the scheduled UEs G (K, W). Column 0 is the oldest."""
    x: np.ndarray
    m: np.ndarray
    g: np.ndarray

    @classmethod
    def zeros(cls, n: int, k: int, w: int) -> "HistoryWindow":
        return cls(np.zeros((n, w)), np.zeros((n, w)), np.zeros((k, w)))

    @property
    def width(self) -> int:
        return self.x.shape[1]

    def sequence(self, capacity: float, scatter: bool = False) -> np.ndarray:
        """LSTM input, one row per slot, batteries scaled by 1/C.

        Rows are ``[X, M, G]`` of width 2N + K, or with ``scatter`` width 3N
        where each reported battery sits at its UE's position (zero elsewhere).
        """
        g = self.g
        if scatter:
            g = np.zeros_like(self.x)
            for j in range(self.width):
                ues = np.flatnonzero(self.x[:, j])
                g[ues, j] = self.g[: ues.size, j]
        return np.concatenate([self.x, self.m / capacity, g / capacity], axis=0).T.copy()


def _shift(block, col, name):
    col = np.asarray(col, dtype=float).reshape(-1)
    if col.shape[0] != block.shape[0]:
        raise ValueError(f"{name} column has length {col.shape[0]}, expected {block.shape[0]}")
    out = np.empty_like(block)
    out[:, :-1] = block[:, 1:]
    out[:, -1] = col
    return out


def history_update(history: HistoryWindow, indicator, predicted, reported) -> HistoryWindow:
    """Drop the oldest column of X, M, G and append the new ones."""
    return HistoryWindow(_shift(history.x, indicator, "X"), _shift(history.m, predicted, "M"),
                         _shift(history.g, reported, "G"))


def to_batteries(out, capacity: float, activation: str):
    """Map raw network outputs to battery units in [0, C].

    Returns ``(b, db_dout)``. A tanh head maps [-1, 1] onto [0, C]; an identity
    head is read as b / C and clamped, with zero slope outside the range.
    """
    out = np.asarray(out, dtype=float)
    if activation == "tanh":
        return capacity * (out + 1.0) / 2.0, np.full_like(out, capacity / 2.0)
    raw = capacity * out
    inside = (raw >= 0.0) & (raw <= capacity)
    return np.clip(raw, 0.0, capacity), np.where(inside, float(capacity), 0.0)


def predict_batteries(history, params: NetworkParams, capacity: float) -> np.ndarray:
    """Length-N battery estimates from a history window (or its sequence)."""
    seq = history.sequence(capacity) if isinstance(history, HistoryWindow) else history
    out = network_forward(seq, params)[0]
    return to_batteries(out, capacity, params.activation)[0]


def _scatter(values, actions, n):
    full = np.zeros((len(actions), n))
    for r, (a, v) in enumerate(zip(actions, values)):
        full[r, list(a)] = v
    return full


def td_errors(batch, params: NetworkParams, gamma_pred: float, capacity: float):
    """TD errors (B, K) on the scheduled outputs, next values under the current
    parameters held fixed, plus what the gradient step needs."""
    states = np.stack([t.state for t in batch])
    nexts = np.stack([t.next_state for t in batch])
    actions = [tuple(t.action) for t in batch]
    reports = np.stack([np.asarray(t.reward, dtype=float).reshape(-1) for t in batch])
    out, cache = network_forward(states, params, return_cache=True)
    v, slope = to_batteries(out, capacity, params.activation)
    if gamma_pred > 0.0:
        v_next = to_batteries(network_forward(nexts, params), capacity, params.activation)[0]
    else:
        v_next = np.zeros_like(v)
    idx = np.array(actions)
    rows = np.arange(len(batch))[:, None]
    delta = reports + gamma_pred * v_next[rows, idx] - v[rows, idx]
    return delta, cache, slope, actions


def td0_update(transition, params: NetworkParams, alpha: float, gamma_pred: float, capacity: float,
               grad_clip: float | None = None):
    """Semi-gradient TD(0) step on the predictor.

    ``transition`` (or a list of them) carries the history sequences S_j and
    S_{j+1}, the scheduled subset and the reported batteries R_{j+1}. Only the
    scheduled outputs receive an error signal; with a list the step follows
    the batch mean. Returns ``(params, delta)``.
    """
    single = not isinstance(transition, (list, tuple))
    batch = [transition] if single else list(transition)
    if not batch:
        raise ValueError("empty batch")
    delta, cache, slope, actions = td_errors(batch, params, gamma_pred, capacity)
    if not np.all(np.isfinite(delta)):
        raise NumericalFault("non-finite TD error")
    # theta += alpha * delta * dv/dtheta  ==  descent on 0.5 * delta**2 with the target fixed
    d_v = -_scatter(delta, actions, params.n_out) / len(batch)
    grads, _ = backward(cache, d_v * slope, params)
    if grad_clip is not None:
        grads = clip_global_norm(grads, grad_clip)
    sgd_step(params, grads, alpha)
    return params, (delta[0] if single else delta)


__all__ = ["HistoryWindow", "history_update", "predict_batteries", "td0_update", "td_errors", "to_batteries"]
