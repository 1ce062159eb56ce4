"""Multi-user energy-harvesting uplink simulator.

One base station sits at the centre of a square cell and picks ``K`` of ``N``
battery-powered UEs per time slot (TS). UEs random-walk, see log-distance
pathloss with optional block Rayleigh fading, and harvest integer energy units
that become usable in the following slot.

All exogenous randomness (mobility, fading, arrivals) is drawn in fixed-size
blocks from one generator and never depends on the actions taken, so two
environments built from the same seed see identical channel and energy
realizations whatever policy drives them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

BLOCK = 256


class InfeasibleTransmission(RuntimeError):
    """A UE was asked to spend more energy than it holds."""


@dataclass
class ScenarioConfig:
    n_ues: int = 30
    k_channels: int = 3
    battery_capacity: int = 5
    tx_power: int = 2
    unit_power_dbm: float = 5.0
    bandwidth_hz: float = 5e6
    noise_dbm_per_hz: float = -174.0
    cell_size_m: float = 500.0
    ue_speed_mps: float = 1.0
    # explicit per-UE rates override the uniform draw from energy_rate_range
    energy_rates: tuple[float, ...] | None = None
    energy_rate_range: tuple[float, float] = (0.8, 1.2)
    arrival_mode: str = "poisson"
    fading_enabled: bool = True
    rate_unit_divisor: float = 1e6
    # None draws each UE's starting level uniformly from {0..C}
    initial_battery: int | None = None
    # flat x0, y0, x1, y1, ... in metres; None draws uniform positions
    ue_positions: tuple[float, ...] | None = None

    def validate(self) -> None:
        if not 1 <= self.k_channels <= self.n_ues:
            raise ValueError(f"need 1 <= k_channels <= n_ues, got K={self.k_channels}, N={self.n_ues}")
        if not 1 <= self.tx_power <= self.battery_capacity:
            raise ValueError(f"need 1 <= tx_power <= battery_capacity, got P={self.tx_power}, C={self.battery_capacity}")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.rate_unit_divisor <= 0:
            raise ValueError("rate_unit_divisor must be positive")
        if self.cell_size_m <= 0 or self.ue_speed_mps < 0:
            raise ValueError("cell_size_m must be positive and ue_speed_mps nonnegative")
        lo, hi = self.energy_rate_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad energy_rate_range {self.energy_rate_range}")
        if self.energy_rates is not None:
            if len(self.energy_rates) != self.n_ues:
                raise ValueError("energy_rates must have one entry per UE")
            if min(self.energy_rates) < 0:
                raise ValueError("energy rates must be nonnegative")
        if self.arrival_mode not in ("poisson", "deterministic"):
            raise ValueError(f"unknown arrival_mode {self.arrival_mode!r}")
        if self.initial_battery is not None and not 0 <= self.initial_battery <= self.battery_capacity:
            raise ValueError("initial_battery outside {0..C}")
        if self.ue_positions is not None:
            pos = np.asarray(self.ue_positions, dtype=float)
            if pos.shape != (2 * self.n_ues,):
                raise ValueError("ue_positions needs 2 coordinates per UE")
            if pos.min() < 0 or pos.max() > self.cell_size_m:
                raise ValueError("ue_positions outside the cell")

    @property
    def tx_power_mw(self) -> float:
        return self.tx_power * 10.0 ** (self.unit_power_dbm / 10.0)

    @property
    def noise_mw(self) -> float:
        return 10.0 ** ((self.noise_dbm_per_hz + 10.0 * math.log10(self.bandwidth_hz)) / 10.0)

    @property
    def bs_position(self) -> np.ndarray:
        return np.full(2, self.cell_size_m / 2.0)


# ---------------------------------------------------------------------------
# physical layer
# ---------------------------------------------------------------------------

def pathloss_db(distance_km):
    """``128.1 + 37.6 log10(d)`` with d in km, clamped at 1 m."""
    d = np.maximum(np.asarray(distance_km, dtype=float), 0.001)
    out = 128.1 + 37.6 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def channel_gain(ue_position, bs_position, fading_sample=1.0):
    """Linear power gain between a UE and the BS (positions in metres)."""
    ue = np.asarray(ue_position, dtype=float)
    dist_km = np.linalg.norm(ue - np.asarray(bs_position, dtype=float), axis=-1) / 1000.0
    out = 10.0 ** (-pathloss_db(dist_km) / 10.0) * np.asarray(fading_sample, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def random_walk_step(position, speed, rng, side=500.0):
    """Move ``speed`` metres in a uniform direction, reflecting off the walls."""
    pos = np.asarray(position, dtype=float).reshape(-1, 2)
    angle = rng.uniform(0.0, 2.0 * np.pi, size=(1, pos.shape[0]))
    out = _kernels.walk_block(pos, angle, float(speed), float(side))[0]
    return out.reshape(np.shape(position))


def sample_energy(rate, rng):
    """Poisson energy arrival (integer units) with mean ``rate``."""
    if np.any(np.asarray(rate) < 0):
        raise ValueError("energy rate must be nonnegative")
    return rng.poisson(rate)


def transmit_indicator(battery, tx_power):
    """1 where the stored energy covers one transmission."""
    return (np.asarray(battery) >= tx_power).astype(np.int64)


def battery_step(battery, arrival, z, scheduled, tx_power, capacity):
    """``min(C, B + E - z I P)``; refuses to draw more energy than stored."""
    used = z * scheduled * tx_power
    if np.any(used > battery):
        raise InfeasibleTransmission(
            f"transmission of {used} units with only {battery} stored")
    return np.minimum(capacity, battery + arrival - used)


def rate_per_ue(gains, cfg: ScenarioConfig):
    """Rate each UE would achieve if it transmitted, in reward units."""
    snr = cfg.tx_power_mw * np.asarray(gains, dtype=float) / cfg.noise_mw
    return cfg.bandwidth_hz * np.log2(1.0 + snr) / cfg.rate_unit_divisor


def sum_rate(selected, flags, gains, cfg: ScenarioConfig) -> float:
    """Sum of Shannon rates of the scheduled UEs that could transmit.

    ``flags`` is aligned with ``selected`` (one transmit indicator per scheduled UE).
    """
    sel = np.asarray(selected, dtype=np.int64)
    r = rate_per_ue(np.asarray(gains)[sel], cfg)
    return float(np.sum(np.asarray(flags) * r))


def prediction_loss(true_batteries, predicted) -> float:
    """Euclidean distance between reported and predicted levels of scheduled UEs."""
    t = np.asarray(true_batteries, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    return float(np.sqrt(np.sum((t - p) ** 2)))


def deterministic_arrivals(rates, phases, t0, n_steps):
    """Arrivals ``floor((t+1) r + phi) - floor(t r + phi)``: periodic for rational rates."""
    t = np.arange(t0, t0 + n_steps, dtype=float)[:, None]
    r = np.asarray(rates, dtype=float)[None, :]
    return (np.floor((t + 1.0) * r + phases) - np.floor(t * r + phases)).astype(np.int64)


# ---------------------------------------------------------------------------
# exogenous processes
# ---------------------------------------------------------------------------

@dataclass
class Trace:
    """A fixed realization: gains and arrivals per slot plus initial batteries."""
    gains: np.ndarray
    arrivals: np.ndarray
    initial_batteries: np.ndarray
    positions: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.gains.shape[0]


class ExogenousProcess:
    """Mobility, fading and energy arrivals drawn block-wise from one generator."""

    def __init__(self, cfg: ScenarioConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.rng = rng
        n = cfg.n_ues
        # layout draws happen in a fixed order regardless of config flags
        self.positions = rng.uniform(0.0, cfg.cell_size_m, size=(n, 2))
        if cfg.ue_positions is not None:
            self.positions = np.asarray(cfg.ue_positions, dtype=float).reshape(n, 2)
        lo, hi = cfg.energy_rate_range
        drawn = rng.uniform(lo, hi, size=n)
        self.energy_rates = np.asarray(cfg.energy_rates, dtype=float) if cfg.energy_rates is not None else drawn
        self.phases = rng.uniform(0.0, 1.0, size=n)
        init = rng.integers(0, cfg.battery_capacity + 1, size=n)
        if cfg.initial_battery is not None:
            init = np.full(n, cfg.initial_battery)
        self.initial_batteries = init.astype(np.int64)
        self.t = 0
        self._block_start = 0
        self._gains = np.empty((0, n))
        self._arrivals = np.empty((0, n), dtype=np.int64)
        self._positions = np.empty((0, n, 2))

    def _refill(self) -> None:
        cfg, rng, n = self.cfg, self.rng, self.cfg.n_ues
        angles = rng.uniform(0.0, 2.0 * np.pi, size=(BLOCK, n))
        fading = rng.exponential(1.0, size=(BLOCK, n))
        poisson = rng.poisson(self.energy_rates, size=(BLOCK, n))
        # slot t uses the positions reached after t moves
        moves = _kernels.walk_block(self.positions, angles, float(cfg.ue_speed_mps), float(cfg.cell_size_m))
        pos = np.concatenate([self.positions[None], moves[:-1]], axis=0)
        self.positions = moves[-1].copy()
        if not cfg.fading_enabled:
            fading = np.ones_like(fading)
        self._positions = pos
        self._gains = channel_gain(pos, cfg.bs_position, fading)
        if cfg.arrival_mode == "poisson":
            self._arrivals = poisson.astype(np.int64)
        else:
            self._arrivals = deterministic_arrivals(self.energy_rates, self.phases, self.t, BLOCK)
        self._block_start = self.t

    def draw(self):
        """Return ``(gains, arrivals, positions)`` for the current slot and advance."""
        k = self.t - self._block_start
        if k >= self._gains.shape[0]:
            self._refill()
            k = 0
        self.t += 1
        return self._gains[k], self._arrivals[k], self._positions[k]


class TraceReplay:
    """Serves a recorded :class:`Trace` through the :class:`ExogenousProcess` interface."""

    def __init__(self, trace: Trace):
        self.trace = trace
        self.initial_batteries = np.asarray(trace.initial_batteries, dtype=np.int64)
        self.t = 0

    def draw(self):
        if self.t >= self.trace.horizon:
            raise IndexError("trace exhausted")
        t = self.t
        self.t += 1
        pos = None if self.trace.positions is None else self.trace.positions[t]
        return self.trace.gains[t], self.trace.arrivals[t], pos


def record_trace(cfg: ScenarioConfig, seed: int, horizon: int) -> Trace:
    """Realization seen by an :class:`UplinkEnv` built with the same seed."""
    exo = ExogenousProcess(cfg, np.random.default_rng(seed))
    init = exo.initial_batteries.copy()
    g, e, p = zip(*(exo.draw() for _ in range(horizon)))
    return Trace(np.array(g), np.array(e), init, np.array(p))


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------

@dataclass
class SystemState:
    t: int
    batteries: np.ndarray
    gains: np.ndarray
    positions: np.ndarray | None = None


@dataclass
class StepOutcome:
    sum_rate: float
    selected: np.ndarray
    transmit_flags: np.ndarray
    true_batteries_selected: np.ndarray
    arrivals: np.ndarray
    next_state: SystemState = field(repr=False)


class UplinkEnv:
    """Slot-by-slot uplink simulator.

    Within slot t: the BS sees ``gains[t]``; scheduled UEs with enough energy
    transmit; their pre-transmission battery levels are reported; every UE
    harvests ``arrivals[t]``, usable from slot t + 1.
    """

    def __init__(self, cfg: ScenarioConfig, seed: int | None = None, trace: Trace | None = None):
        cfg.validate()
        self.cfg = cfg
        if trace is not None:
            self.exo = TraceReplay(trace)
        else:
            self.exo = ExogenousProcess(cfg, np.random.default_rng(seed))
        self.batteries = self.exo.initial_batteries.copy()
        self.t = 0
        self._load_slot()

    def _load_slot(self) -> None:
        try:
            self.gains, self.arrivals, self.positions = self.exo.draw()
        except IndexError:
            self.gains = self.arrivals = self.positions = None

    @property
    def state(self) -> SystemState:
        copy = lambda a: None if a is None else a.copy()
        return SystemState(self.t, self.batteries.copy(), copy(self.gains), copy(self.positions))

    @property
    def energy_rates(self):
        return getattr(self.exo, "energy_rates", None)

    def step(self, selected) -> StepOutcome:
        cfg = self.cfg
        if self.gains is None:
            raise IndexError("trace exhausted")
        sel = np.asarray(selected, dtype=np.int64)
        if sel.shape != (cfg.k_channels,) or len(set(sel.tolist())) != cfg.k_channels:
            raise ValueError(f"action must be {cfg.k_channels} distinct UE indices, got {selected}")
        if sel.min() < 0 or sel.max() >= cfg.n_ues:
            raise ValueError(f"UE index out of range in {selected}")
        reported = self.batteries[sel].copy()
        flags = transmit_indicator(reported, cfg.tx_power)
        rate = sum_rate(sel, flags, self.gains, cfg)
        scheduled = np.zeros(cfg.n_ues, dtype=np.int64)
        scheduled[sel] = 1
        z = transmit_indicator(self.batteries, cfg.tx_power)
        arrivals = self.arrivals
        self.batteries = battery_step(self.batteries, arrivals, z, scheduled,
                                      cfg.tx_power, cfg.battery_capacity).astype(np.int64)
        self.t += 1
        self._load_slot()
        return StepOutcome(rate, sel, flags, reported, arrivals.copy(), self.state)


def env_step(env: UplinkEnv, selected) -> StepOutcome:
    return env.step(selected)
