"""Training loops for access control, battery prediction and the joint problem.

Every loop owns its environment, agent and replay buffer. The environment is
seeded with ``cfg.seed`` alone, so runs of different algorithms under the same
seed see the same channel and energy realizations. Agent-side randomness
(initialization, exploration, replay sampling) comes from separate streams.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import ExperimentConfig
from ..env import Trace, UplinkEnv, prediction_loss
from ..nn import NetworkParams, network_forward, weight_init
from .dqn import ActionSpace, AgentParams, dqn_update
from .exploration import EpsilonSchedule
from .features import access_state, scale_gains
from .joint import JointAgent, JointParams, joint_forward, joint_reward, joint_update
from .predictor import HistoryWindow, history_update, predict_batteries, td0_update
from .replay import ReplayBuffer, Transition


@dataclass
class TrainResult:
    """Per-step series of one run plus the final parameters."""
    algorithm: str
    reward: np.ndarray
    sum_rate: np.ndarray
    p_loss: np.ndarray
    train_loss: np.ndarray
    epsilon: np.ndarray
    episode: np.ndarray
    params: object = field(default=None, repr=False)
    steps_done: int = 0

    @classmethod
    def allocate(cls, algorithm: str, steps: int, episode_length: int) -> "TrainResult":
        nan = lambda: np.full(steps, np.nan)
        return cls(algorithm, nan(), nan(), nan(), nan(), np.zeros(steps),
                   np.arange(steps, dtype=np.int64) // episode_length)

    def __len__(self) -> int:
        return len(self.reward)


def agent_streams(seed: int):
    """(initialization rng, exploration/replay rng), independent of the environment stream."""
    ss = np.random.SeedSequence([seed, 0x5EED])
    a, b = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def make_env(cfg: ExperimentConfig, trace: Trace | None = None) -> UplinkEnv:
    return UplinkEnv(cfg.scenario(), seed=cfg.seed, trace=trace)


def _epsilon(cfg: ExperimentConfig) -> EpsilonSchedule:
    return EpsilonSchedule(cfg.eps_start, cfg.eps_end, cfg.eps_decay_steps)


def _access_obs(env: UplinkEnv, cfg: ExperimentConfig):
    return access_state(env.batteries, env.gains, cfg.battery_capacity, cfg.gain_db_low, cfg.gain_db_high)


# ---------------------------------------------------------------------------
# access control
# ---------------------------------------------------------------------------

def init_access_params(cfg: ExperimentConfig, rng: np.random.Generator) -> NetworkParams:
    space = ActionSpace(cfg.n_ues, cfg.k_channels, cfg.action_mode, cfg.action_cap)
    return weight_init(2 * cfg.n_ues, cfg.lstm_units, space.n_outputs, rng, cfg.q_activation)


def train_access(cfg: ExperimentConfig, trace: Trace | None = None,
                 result: TrainResult | None = None) -> TrainResult:
    """DQN access control with batteries and gains observed at decision time."""
    cfg.validate()
    env = make_env(cfg, trace)
    init_rng, rng = agent_streams(cfg.seed)
    space = ActionSpace(cfg.n_ues, cfg.k_channels, cfg.action_mode, cfg.action_cap)
    agent = AgentParams.create(init_access_params(cfg, init_rng), cfg.sync_period)
    buf = ReplayBuffer(cfg.replay_capacity)
    eps_at = _epsilon(cfg)
    res = result if result is not None else TrainResult.allocate("access", cfg.total_steps, cfg.episode_length)
    s = _access_obs(env, cfg)
    for t in range(cfg.total_steps):
        eps = eps_at(t)
        if rng.random() < eps:
            a = space.random(rng)
        else:
            a = space.greedy(network_forward(s, agent.online)[0])
        out = env.step(a)
        exhausted = env.gains is None
        s2 = s if exhausted else _access_obs(env, cfg)
        terminal = exhausted or t == cfg.total_steps - 1
        buf.push(Transition(s, a, out.sum_rate * cfg.reward_scale, s2, terminal))
        if len(buf) >= cfg.warmup_steps:
            res.train_loss[t] = dqn_update(buf.sample(cfg.batch_size, rng), agent, cfg.learning_rate,
                                           cfg.gamma, space, cfg.grad_clip)
        res.reward[t] = res.sum_rate[t] = out.sum_rate
        res.epsilon[t] = eps
        res.steps_done = t + 1
        s = s2
        if exhausted:
            break
    res.params = agent
    return res


def greedy_access_schedule(params: NetworkParams, cfg: ExperimentConfig, trace: Trace, horizon: int):
    """Schedule chosen by the greedy access policy on a known realization."""
    space = ActionSpace(cfg.n_ues, cfg.k_channels, cfg.action_mode, cfg.action_cap)
    env = make_env(cfg, trace)
    schedule = []
    for _ in range(horizon):
        a = space.greedy(network_forward(_access_obs(env, cfg), params)[0])
        env.step(a)
        schedule.append(a)
    return schedule


# ---------------------------------------------------------------------------
# battery prediction under round-robin
# ---------------------------------------------------------------------------

def init_predictor_params(cfg: ExperimentConfig, rng: np.random.Generator) -> NetworkParams:
    n, k = cfg.n_ues, cfg.k_channels
    width = 3 * n if cfg.history_scatter else 2 * n + k
    return weight_init(width, cfg.lstm_units, n, rng, cfg.pred_activation)


def _indicator(n: int, sel) -> np.ndarray:
    col = np.zeros(n)
    col[list(sel)] = 1.0
    return col


def train_predict(cfg: ExperimentConfig, trace: Trace | None = None,
                  result: TrainResult | None = None) -> TrainResult:
    """TD(0) training of the battery predictor while a fixed rule schedules.

    ``cfg.predict_scheduler`` picks round-robin (default) or uniform random
    scheduling. The logged reward scores the run under the joint objective,
    sum rate minus ``beta`` times the prediction loss, so it can be compared
    with the joint agent.
    """
    cfg.validate()
    n, k, cap = cfg.n_ues, cfg.k_channels, cfg.battery_capacity
    env = make_env(cfg, trace)
    init_rng, rng = agent_streams(cfg.seed)
    sched_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5C4ED]))
    params = init_predictor_params(cfg, init_rng)
    buf = ReplayBuffer(cfg.replay_capacity)
    res = result if result is not None else TrainResult.allocate("predict", cfg.total_steps, cfg.episode_length)
    hist = HistoryWindow.zeros(n, k, cfg.history_window)
    seq = hist.sequence(cap, cfg.history_scatter)
    pointer = 0
    for t in range(cfg.total_steps):
        b = predict_batteries(seq, params, cap)
        if cfg.predict_scheduler == "random":
            sel = tuple(int(i) for i in np.sort(sched_rng.choice(n, size=k, replace=False)))
        else:
            sel = tuple(sorted(int(i) for i in (pointer + np.arange(k)) % n))
            pointer = (pointer + k) % n
        out = env.step(sel)
        reported = out.true_batteries_selected.astype(float)
        p_loss = prediction_loss(reported, b[list(sel)])
        hist = history_update(hist, _indicator(n, sel), b, reported)
        seq2 = hist.sequence(cap, cfg.history_scatter)
        buf.push(Transition(seq, sel, reported, seq2, False))
        if len(buf) >= cfg.warmup_steps:
            _, delta = td0_update(buf.sample(cfg.batch_size, rng), params, cfg.pred_learning_rate,
                                  cfg.gamma_pred, cap, cfg.grad_clip)
            res.train_loss[t] = float(np.mean(np.sum(delta ** 2, axis=1)))
        res.reward[t] = joint_reward(out.sum_rate, p_loss, cfg.beta)
        res.sum_rate[t] = out.sum_rate
        res.p_loss[t] = p_loss
        res.steps_done = t + 1
        seq = seq2
        if env.gains is None:
            break
    res.params = params
    return res


# ---------------------------------------------------------------------------
# joint prediction and access control
# ---------------------------------------------------------------------------

def init_joint_params(cfg: ExperimentConfig, rng: np.random.Generator) -> JointParams:
    space = ActionSpace(cfg.n_ues, cfg.k_channels, cfg.action_mode, cfg.action_cap)
    b = init_predictor_params(cfg, rng)
    a = weight_init(2 * cfg.n_ues, cfg.lstm_units, space.n_outputs, rng, cfg.q_activation)
    return JointParams(a, b)


def train_joint(cfg: ExperimentConfig, trace: Trace | None = None,
                result: TrainResult | None = None) -> TrainResult:
    """Episodic joint training; batteries are never observed before scheduling.

    Episodes of ``episode_length`` slots run back to back on one environment,
    so the realization matches the other algorithms under the same seed; the
    last slot of each episode is marked terminal.
    """
    cfg.validate()
    n, k, cap = cfg.n_ues, cfg.k_channels, cfg.battery_capacity
    env = make_env(cfg, trace)
    init_rng, rng = agent_streams(cfg.seed)
    space = ActionSpace(n, k, cfg.action_mode, cfg.action_cap)
    agent = JointAgent.create(init_joint_params(cfg, init_rng), cfg.sync_period)
    buf = ReplayBuffer(cfg.replay_capacity)
    eps_at = _epsilon(cfg)
    res = result if result is not None else TrainResult.allocate("joint", cfg.total_steps, cfg.episode_length)
    hist = HistoryWindow.zeros(n, k, cfg.history_window)

    def obs():  # reads the current history and slot
        return hist.sequence(cap, cfg.history_scatter), scale_gains(env.gains, cfg.gain_db_low, cfg.gain_db_high)

    s = obs()
    for t in range(cfg.total_steps):
        eps = eps_at(t)
        b, q = joint_forward(s[0], s[1], agent.online, cap)
        b, q = b[0], q[0]
        a = space.random(rng) if rng.random() < eps else space.greedy(q)
        out = env.step(a)
        reported = out.true_batteries_selected.astype(float)
        p_loss = prediction_loss(reported, b[list(a)])
        reward = joint_reward(out.sum_rate, p_loss, cfg.beta)
        hist = history_update(hist, _indicator(n, a), b, reported)
        exhausted = env.gains is None
        s2 = s if exhausted else obs()
        terminal = exhausted or (t + 1) % cfg.episode_length == 0 or t == cfg.total_steps - 1
        buf.push(Transition(s, a, reward * cfg.reward_scale, s2, terminal, extra=reported))
        if len(buf) >= cfg.warmup_steps:
            res.train_loss[t] = joint_update(buf.sample(cfg.batch_size, rng), agent, cfg.learning_rate,
                                             cfg.gamma, space, cap, cfg.joint_pred_weight, cfg.grad_clip,
                                             alpha_b=cfg.pred_learning_rate)
        res.reward[t] = reward
        res.sum_rate[t] = out.sum_rate
        res.p_loss[t] = p_loss
        res.epsilon[t] = eps
        res.steps_done = t + 1
        s = s2
        if exhausted:
            break
    res.params = agent
    return res


__all__ = ["TrainResult", "agent_streams", "greedy_access_schedule", "init_access_params",
           "init_joint_params", "init_predictor_params", "make_env", "train_access", "train_joint",
           "train_predict"]
