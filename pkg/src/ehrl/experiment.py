"""Experiment orchestration: one run per (config, seed) and policy comparison tables."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from .agents.training import TrainResult, agent_streams, make_env, train_access, train_joint, train_predict
from .baselines import (DP_BUDGET, RoundRobinState, dp_oracle, myopic_select, random_select,
                        relaxation_bound, round_robin_select)
from .config import ExperimentConfig
from .env import Trace, record_trace
from .metrics import moving_average, write_metrics


def metrics_filename(algorithm: str, seed: int) -> str:
    return f"{algorithm.replace(':', '_')}-{seed}.csv"


def run_baseline(cfg: ExperimentConfig, name: str, trace: Trace | None = None,
                 result: TrainResult | None = None) -> TrainResult:
    """Roll out a reference scheduler; the logged reward is the sum rate."""
    scen = cfg.scenario()
    n, k = cfg.n_ues, cfg.k_channels
    env = make_env(cfg, trace)
    _, rng = agent_streams(cfg.seed)
    res = result if result is not None else TrainResult.allocate(f"baseline:{name}", cfg.total_steps,
                                                                 cfg.episode_length)
    if name == "oracle":
        full = trace if trace is not None else record_trace(scen, cfg.seed, cfg.total_steps)
        _, schedule = dp_oracle(full, scen, cfg.total_steps)
    elif name not in ("rr", "random", "mp"):
        raise ValueError(f"unknown baseline {name!r}")
    rr = RoundRobinState()
    for t in range(cfg.total_steps):
        if name == "rr":
            sel, rr = round_robin_select(rr, n, k)
        elif name == "random":
            sel = random_select(n, k, rng)
        elif name == "mp":
            sel = myopic_select(env.batteries, env.gains, scen)
        else:
            sel = schedule[t]
        out = env.step(sel)
        res.reward[t] = res.sum_rate[t] = out.sum_rate
        res.epsilon[t] = 0.0
        res.steps_done = t + 1
        if env.gains is None:
            break
    return res


def run_policy(cfg: ExperimentConfig, trace: Trace | None = None, result: TrainResult | None = None) -> TrainResult:
    algo = cfg.algorithm
    if algo == "access":
        return train_access(cfg, trace, result)
    if algo == "predict":
        return train_predict(cfg, trace, result)
    if algo == "joint":
        return train_joint(cfg, trace, result)
    return run_baseline(cfg, algo.split(":", 1)[1], trace, result)


def _final(series, window: int) -> float:
    x = np.asarray(series, dtype=float)
    return float(moving_average(x, window)[-1]) if x.size else float("nan")


def summarize(result: TrainResult, window: int) -> dict:
    n = result.steps_done
    loss = result.train_loss[:n][-window:]
    return {
        "algorithm": result.algorithm,
        "steps": n,
        "final_reward_smooth": _final(result.reward[:n], window),
        "final_p_loss_smooth": _final(result.p_loss[:n], window),
        "final_train_loss": float(np.nanmean(loss)) if np.any(np.isfinite(loss)) else float("nan"),
        "mean_reward": float(np.mean(result.reward[:n])) if n else float("nan"),
    }


def run_experiment(cfg: ExperimentConfig, out_dir=None, write: bool = True):
    """Run ``cfg.algorithm`` and write ``<algo>-<seed>.csv`` under ``out_dir``.

    Returns ``(result, summary)``. If the run fails, the completed rows are
    written followed by a truncation marker and the error is re-raised.
    """
    cfg.validate()
    res = TrainResult.allocate(cfg.algorithm, cfg.total_steps, cfg.episode_length)
    path = Path(out_dir if out_dir is not None else cfg.out_dir) / metrics_filename(cfg.algorithm, cfg.seed)
    try:
        run_policy(cfg, result=res)
    except BaseException:
        if write:
            write_metrics(path, res, cfg.smoothing_window, upto=res.steps_done, truncated=True)
        raise
    truncated = res.steps_done < cfg.total_steps
    if write:
        write_metrics(path, res, cfg.smoothing_window, upto=res.steps_done, truncated=truncated)
    summary = summarize(res, cfg.smoothing_window)
    summary["metrics_file"] = str(path) if write else None
    return res, summary


# ---------------------------------------------------------------------------
# comparisons
# ---------------------------------------------------------------------------

@dataclass
class ComparisonRow:
    name: str
    values: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def se(self) -> float:
        v = np.asarray(self.values, dtype=float)
        return float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0


@dataclass
class ComparisonTable:
    seeds: list
    window: int
    rows: list = field(default_factory=list)

    def row(self, name: str) -> ComparisonRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def format(self) -> str:
        lines = [f"final smoothed reward (window {self.window}), seeds {self.seeds}",
                 f"{'policy':<22}{'mean':>12}{'se':>10}   per-seed"]
        for r in self.rows:
            per = " ".join(f"{v:.3f}" for v in r.values)
            lines.append(f"{r.name:<22}{r.mean:>12.4f}{r.se:>10.4f}   {per}")
        return "\n".join(lines)


def oracle_fits(cfg: ExperimentConfig, horizon: int) -> bool:
    c, n, k = cfg.battery_capacity, cfg.n_ues, cfg.k_channels
    return (c + 1) ** n * horizon * comb(n, k) <= DP_BUDGET


def window_bounds(cfg: ExperimentConfig, window: int, trace: Trace | None = None) -> dict:
    """Per-slot upper bounds on the reward of any policy over the last ``window``
    slots of the run. Batteries at the window start are unknown, so they are
    set to C, which can only raise the optimum."""
    scen = cfg.scenario()
    full = trace if trace is not None else record_trace(scen, cfg.seed, cfg.total_steps)
    w = min(window, full.horizon)
    tail = Trace(full.gains[-w:], full.arrivals[-w:], np.full(cfg.n_ues, cfg.battery_capacity, dtype=np.int64))
    out = {"relaxation": relaxation_bound(tail, scen, w) / w}
    if oracle_fits(cfg, w):
        out["oracle"] = dp_oracle(tail, scen, w)[0] / w
    return out


def compare_policies(cfg: ExperimentConfig, policies, seeds, window: int | None = None,
                     bounds: bool = True) -> ComparisonTable:
    """Final smoothed reward of each policy per seed on common realizations.

    Every policy run under a given seed sees the same environment stream, so
    channel and energy realizations are shared. Bound rows are added when
    ``bounds`` is set (the exact oracle only when the instance is small enough).
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    window = window or cfg.smoothing_window
    table = ComparisonTable(seeds, window, [ComparisonRow(name) for name in policies])
    bound_rows = {}
    for seed in seeds:
        for row in table.rows:
            res = run_policy(cfg.replace(seed=seed, algorithm=row.name))
            row.values.append(_final(res.reward[:res.steps_done], window))
        if bounds:
            for key, value in window_bounds(cfg.replace(seed=seed), window).items():
                bound_rows.setdefault(key, ComparisonRow(f"bound:{key}")).values.append(value)
    table.rows.extend(bound_rows.values())
    return table
