"""Experiment configuration: one flat ``key = value`` file per run.

Booleans are written ``true``/``false``, tuples as comma-joined numbers and an
unset optional value as ``none``. Lines starting with ``#`` are comments.
Unknown keys are rejected so that typos do not silently fall back to defaults.
"""
from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .env import ScenarioConfig

ALGORITHMS = ("access", "predict", "joint", "baseline:rr", "baseline:random", "baseline:mp", "baseline:oracle")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # scenario
    n_ues: int = 30
    k_channels: int = 3
    battery_capacity: int = 5
    tx_power: int = 2
    unit_power_dbm: float = 5.0
    bandwidth_hz: float = 5e6
    noise_dbm_per_hz: float = -174.0
    cell_size_m: float = 500.0
    ue_speed_mps: float = 1.0
    energy_rates: tuple[float, ...] | None = None
    energy_rate_range: tuple[float, float] = (0.8, 1.2)
    arrival_mode: str = "poisson"
    fading_enabled: bool = True
    rate_unit_divisor: float = 1e6
    initial_battery: int | None = None
    ue_positions: tuple[float, ...] | None = None
    # run
    algorithm: str = "access"
    seed: int = 0
    total_steps: int = 30000
    out_dir: str = "runs"
    # learning
    gamma: float = 0.99
    learning_rate: float = 1e-4
    batch_size: int = 16
    replay_capacity: int = 100000
    lstm_units: int = 128
    history_window: int = 10
    beta: float = 100.0
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 10000
    sync_period: int = 100
    episode_length: int = 200
    grad_clip: float = 10.0
    action_mode: str = "enumerated"
    action_cap: int = 4096
    reward_scale: float = 0.01
    q_activation: str = "identity"
    pred_activation: str = "tanh"
    gamma_pred: float = 0.9
    pred_learning_rate: float = 1e-4
    joint_pred_weight: float = 1.0
    predict_scheduler: str = "rr"
    history_scatter: bool = False
    warmup_steps: int = 16
    gain_db_low: float = -140.0
    gain_db_high: float = -60.0
    smoothing_window: int = 200

    def scenario(self) -> ScenarioConfig:
        names = {f.name for f in fields(ScenarioConfig)}
        return ScenarioConfig(**{k: getattr(self, k) for k in names})

    @property
    def episodes(self) -> int:
        """Number of episodes E_p implied by ``total_steps`` and ``episode_length``."""
        return -(-self.total_steps // self.episode_length)

    def validate(self) -> "ExperimentConfig":
        try:
            self.scenario().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        checks = [
            (self.algorithm in ALGORITHMS, f"algorithm must be one of {ALGORITHMS}"),
            (0.0 <= self.gamma < 1.0, "gamma must lie in [0, 1)"),
            (0.0 <= self.gamma_pred < 1.0, "gamma_pred must lie in [0, 1)"),
            (self.learning_rate >= 0 and self.pred_learning_rate >= 0, "learning rates must be nonnegative"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.replay_capacity >= 1, "replay_capacity must be >= 1"),
            (self.lstm_units >= 1, "lstm_units must be >= 1"),
            (self.history_window >= 1, "history_window must be >= 1"),
            (self.beta >= 0, "beta must be nonnegative"),
            (0.0 <= self.eps_end <= self.eps_start <= 1.0, "need 0 <= eps_end <= eps_start <= 1"),
            (self.eps_decay_steps >= 0, "eps_decay_steps must be nonnegative"),
            (self.sync_period >= 1, "sync_period must be >= 1"),
            (self.episode_length >= 1, "episode_length must be >= 1"),
            (self.total_steps >= 1, "total_steps must be >= 1"),
            (self.grad_clip > 0, "grad_clip must be positive"),
            (self.action_mode in ("enumerated", "factorized"), "action_mode must be enumerated or factorized"),
            (self.action_cap >= 1, "action_cap must be >= 1"),
            (self.reward_scale > 0, "reward_scale must be positive"),
            (self.q_activation in ("tanh", "identity"), "q_activation must be tanh or identity"),
            (self.pred_activation in ("tanh", "identity"), "pred_activation must be tanh or identity"),
            (self.joint_pred_weight >= 0, "joint_pred_weight must be nonnegative"),
            (self.predict_scheduler in ("rr", "random"), "predict_scheduler must be rr or random"),
            (self.warmup_steps >= 1, "warmup_steps must be >= 1"),
            (self.gain_db_high > self.gain_db_low, "gain_db_high must exceed gain_db_low"),
            (self.smoothing_window >= 1, "smoothing_window must be >= 1"),
            (self.seed >= 0, "seed must be nonnegative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes).validate()


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

_HINTS = typing.get_type_hints(ExperimentConfig)


def _base_type(hint):
    """(python type, optional?, is_tuple) for the few annotations used above."""
    optional = False
    args = typing.get_args(hint)
    if typing.get_origin(hint) in (typing.Union, types.UnionType):
        optional = type(None) in args
        hint = next(a for a in args if a is not type(None))
    if typing.get_origin(hint) is tuple:
        return float, optional, True
    return hint, optional, False


def _parse_value(key: str, raw: str):
    typ, optional, is_tuple = _base_type(_HINTS[key])
    raw = raw.strip()
    if optional and raw.lower() in ("none", ""):
        return None
    try:
        if is_tuple:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError(f"expected true/false, got {raw!r}")
            return low == "true"
        if typ is int:
            f = float(raw)
            if f != int(f):
                raise ValueError(f"expected an integer, got {raw!r}")
            return int(f)
        if typ is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str, **overrides) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _HINTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values).validate()


def load_config(path, **overrides) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), **overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_format_value(getattr(cfg, f.name))}\n" for f in fields(cfg))


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))
