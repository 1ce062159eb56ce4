"""Reference schedulers and offline bounds.

Round-robin, random and myopic policies produce one K-subset per slot. The two
offline quantities work on a fully known :class:`~ehrl.env.Trace`:
``dp_oracle`` solves the scheduling problem exactly on tiny instances and
``relaxation_bound`` gives a scalable upper bound.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import _kernels
from .agents.combinadic import indicator_table, subset_table
from .env import ScenarioConfig, Trace, rate_per_ue, transmit_indicator

DP_BUDGET = 10**7


class OracleTooLarge(ValueError):
    """Instance exceeds the exact DP budget; use :func:`relaxation_bound`."""


@dataclass
class RoundRobinState:
    pointer: int = 0


def round_robin_select(state: RoundRobinState, n: int, k: int):
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= K <= N, got K={k}, N={n}")
    sel = (state.pointer + np.arange(k)) % n
    return sel.astype(np.int64), RoundRobinState((state.pointer + k) % n)


def random_select(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= K <= N, got K={k}, N={n}")
    return np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)


def myopic_select(batteries, gains, cfg: ScenarioConfig) -> np.ndarray:
    """K UEs with the largest instantaneous feasible rate.

    Feasible UEs are ranked by rate, ties to the lower index. Leftover slots go
    to infeasible UEs with the best gains, so the action always has K entries.
    """
    gains = np.asarray(gains, dtype=float)
    z = transmit_indicator(batteries, cfg.tx_power)
    score = z * rate_per_ue(gains, cfg)
    idx = np.arange(gains.shape[0])
    # lexsort keys: last is primary
    order = np.lexsort((idx, -gains, -score, -z))
    return np.sort(order[: cfg.k_channels]).astype(np.int64)


# ---------------------------------------------------------------------------
# offline bounds
# ---------------------------------------------------------------------------

def _trace_rates(trace: Trace, cfg: ScenarioConfig, horizon: int):
    if horizon > trace.horizon:
        raise ValueError(f"horizon {horizon} longer than trace ({trace.horizon})")
    rates = rate_per_ue(trace.gains[:horizon], cfg)
    return np.ascontiguousarray(rates, dtype=float), np.ascontiguousarray(trace.arrivals[:horizon], dtype=np.int64)


def check_oracle_size(cfg: ScenarioConfig, horizon: int) -> None:
    """Raise :class:`OracleTooLarge` if the exact DP would exceed its budget."""
    n, k, c = cfg.n_ues, cfg.k_channels, cfg.battery_capacity
    work = (c + 1) ** n * horizon * comb(n, k)
    if work > DP_BUDGET:
        raise OracleTooLarge(
            f"(C+1)^N * horizon * C(N,K) = {work} exceeds {DP_BUDGET}; use relaxation_bound")


def dp_oracle(trace: Trace, cfg: ScenarioConfig, horizon: int, gamma: float = 1.0):
    """Exact optimum of the discounted sum rate over a known realization.

    Returns ``(value, schedule)`` where ``schedule`` lists the optimal K-subset
    for each slot, starting from ``trace.initial_batteries``.
    """
    n, k, c = cfg.n_ues, cfg.k_channels, cfg.battery_capacity
    check_oracle_size(cfg, horizon)
    rates, arrivals = _trace_rates(trace, cfg, horizon)
    ind = indicator_table(n, k)
    values, policy = _kernels.dp_backward(rates, arrivals, ind, cfg.tx_power, c, float(gamma))
    radix = (c + 1) ** np.arange(n, dtype=np.int64)
    b = np.asarray(trace.initial_batteries, dtype=np.int64).copy()
    s0 = int(b @ radix)
    subsets = subset_table(n, k)
    schedule = []
    for t in range(horizon):
        a = int(policy[t, int(b @ radix)])
        schedule.append(tuple(int(i) for i in subsets[a]))
        z = (b >= cfg.tx_power).astype(np.int64) * ind[a]
        b = np.minimum(c, b + arrivals[t] - z * cfg.tx_power)
    return float(values[0, s0]), schedule


def replay_schedule(trace: Trace, cfg: ScenarioConfig, schedule, gamma: float = 1.0) -> float:
    """Discounted sum rate of a fixed schedule on a known realization."""
    horizon = len(schedule)
    rates, arrivals = _trace_rates(trace, cfg, horizon)
    sched = np.zeros((horizon, cfg.n_ues), dtype=np.int64)
    for t, sel in enumerate(schedule):
        sched[t, list(sel)] = 1
    _, flags, violations = _kernels.battery_rollout(
        np.asarray(trace.initial_batteries, dtype=np.int64), arrivals, sched,
        cfg.tx_power, cfg.battery_capacity)
    assert violations == 0
    disc = gamma ** np.arange(horizon)
    return float(np.sum(disc * np.sum(flags * rates, axis=1)))


def transmission_limits(trace: Trace, cfg: ScenarioConfig, horizon: int) -> np.ndarray:
    """Per-UE cap on transmissions once capacity and causality are dropped.

    Arrivals of the last slot are excluded since they cannot be spent within
    the horizon.
    """
    usable = trace.arrivals[: max(horizon - 1, 0)].sum(axis=0)
    return (np.asarray(trace.initial_batteries) + usable) // cfg.tx_power


def relaxation_bound(trace: Trace, cfg: ScenarioConfig, horizon: int, gamma: float = 1.0) -> float:
    """Upper bound on any policy's (discounted) sum rate over the realization.

    Each UE may transmit at most ``transmission_limits`` times and each slot
    carries at most K transmissions. The result is a bipartite transportation
    problem (slots x UEs); its constraint matrix is totally unimodular, so the
    LP optimum found by HiGHS equals the integral min-cost-flow optimum.
    """
    rates, _ = _trace_rates(trace, cfg, horizon)
    n, k = cfg.n_ues, cfg.k_channels
    limits = np.minimum(transmission_limits(trace, cfg, horizon), horizon)
    w = rates * (gamma ** np.arange(horizon))[:, None]
    if np.all(limits >= horizon):
        # every UE can transmit in every slot: pick the top-K per slot
        return float(np.sort(w, axis=1)[:, n - k:].sum())
    if not np.any(limits):
        return 0.0
    rows_t = sp.kron(sp.eye(horizon), np.ones((1, n)), format="csr")
    rows_i = sp.kron(np.ones((1, horizon)), sp.eye(n), format="csr")
    a_ub = sp.vstack([rows_t, rows_i], format="csr")
    b_ub = np.concatenate([np.full(horizon, k), limits]).astype(float)
    res = linprog(-w.ravel(), A_ub=a_ub, b_ub=b_ub, bounds=(0.0, 1.0), method="highs")
    if res.status != 0:
        raise RuntimeError(f"relaxation LP failed: {res.message}")
    return float(-res.fun)
