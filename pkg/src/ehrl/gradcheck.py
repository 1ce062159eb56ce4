"""Finite-difference checks of the three training gradients.

Each check builds a small random instance, computes the analytic gradient the
training code uses and compares it with central differences of the same loss.
The reported figure is the largest norm-wise relative error over the parameter
arrays; ``elementwise=True`` gives the per-entry maximum instead.
"""
from __future__ import annotations

import numpy as np

from .agents.dqn import ActionSpace, q_loss_and_grad
from .agents.joint import JointParams, joint_loss_and_grad
from .agents.predictor import to_batteries
from .nn import (backward, elementwise_relative_error, network_forward, numeric_gradient, relative_error,
                 weight_init)

N, K, C, W, HIDDEN, BATCH = 4, 2, 5.0, 3, 5, 4


def _compare(analytic, numeric, elementwise: bool) -> float:
    err = elementwise_relative_error if elementwise else relative_error
    return max(err(a, n) for a, n in zip(analytic, numeric))


def _subsets(rng, batch):
    return [tuple(int(i) for i in np.sort(rng.choice(N, size=K, replace=False))) for _ in range(batch)]


def check_control(seed: int, epsilon: float = 1e-5, mode: str = "enumerated", elementwise: bool = False) -> float:
    """TD loss of the Q-network w.r.t. all of its parameters."""
    rng = np.random.default_rng(seed)
    space = ActionSpace(N, K, mode)
    params = weight_init(2 * N, HIDDEN, space.n_outputs, rng, "identity")
    x = rng.uniform(-1, 1, size=(BATCH, 1, 2 * N))
    masks = space.mask(_subsets(rng, BATCH))
    y = rng.normal(size=BATCH)
    _, grads, _ = q_loss_and_grad(params, x, masks, y)

    def loss():
        return float(np.mean((np.sum(network_forward(x, params) * masks, axis=1) - y) ** 2))

    return _compare(grads.arrays(), numeric_gradient(loss, params.arrays(), epsilon), elementwise)


def check_predictor(seed: int, epsilon: float = 1e-5, gamma_pred: float = 0.9, elementwise: bool = False) -> float:
    """Half squared TD error of the predictor, next-state values held fixed."""
    rng = np.random.default_rng(seed)
    params = weight_init(2 * N + K, HIDDEN, N, rng, "tanh")
    x = rng.uniform(0, 1, size=(BATCH, W, 2 * N + K))
    x_next = rng.uniform(0, 1, size=(BATCH, W, 2 * N + K))
    idx = np.array(_subsets(rng, BATCH))
    rows = np.arange(BATCH)[:, None]
    reports = rng.integers(0, int(C) + 1, size=(BATCH, K)).astype(float)
    v_next = to_batteries(network_forward(x_next, params), C, "tanh")[0][rows, idx]
    target = reports + gamma_pred * v_next

    out, cache = network_forward(x, params, return_cache=True)
    v, slope = to_batteries(out, C, "tanh")
    d_v = np.zeros_like(v)
    d_v[rows, idx] = (v[rows, idx] - target) / BATCH
    grads, _ = backward(cache, d_v * slope, params)

    def loss():
        vv = to_batteries(network_forward(x, params), C, "tanh")[0][rows, idx]
        return float(0.5 * np.mean(np.sum((target - vv) ** 2, axis=1)))

    return _compare(grads.arrays(), numeric_gradient(loss, params.arrays(), epsilon), elementwise)


def check_joint(seed: int, epsilon: float = 1e-5, pred_weight: float = 1.0, elementwise: bool = False) -> float:
    """Joint loss through both layers, including every prediction-layer entry."""
    rng = np.random.default_rng(seed)
    space = ActionSpace(N, K)
    params = JointParams(weight_init(2 * N, HIDDEN, space.n_outputs, rng, "identity"),
                         weight_init(2 * N + K, HIDDEN, N, rng, "tanh"))
    seqs = rng.uniform(0, 1, size=(BATCH, W, 2 * N + K))
    gains = rng.uniform(-1, 1, size=(BATCH, N))
    actions = _subsets(rng, BATCH)
    masks = space.mask(actions)
    y = rng.normal(size=BATCH)
    reports = rng.integers(0, int(C) + 1, size=(BATCH, K)).astype(float)
    _, ga, gb = joint_loss_and_grad(params, seqs, gains, masks, y, C, reports, actions, pred_weight)

    def loss():
        return joint_loss_and_grad(params, seqs, gains, masks, y, C, reports, actions, pred_weight)[0]

    return _compare(ga.arrays() + gb.arrays(), numeric_gradient(loss, params.arrays(), epsilon), elementwise)


CHECKS = {"control": check_control, "predictor": check_predictor, "joint": check_joint}


def run_gradchecks(seeds=range(10), epsilon: float = 1e-5, elementwise: bool = False) -> dict:
    """Max relative error of each check over ``seeds``."""
    return {name: max(fn(s, epsilon, elementwise=elementwise) for s in seeds) for name, fn in CHECKS.items()}
