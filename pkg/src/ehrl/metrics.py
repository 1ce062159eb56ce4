"""Per-step metric records, smoothing and the CSV metric file."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

HEADER = "step,episode,reward,reward_smooth,p_loss,train_loss,epsilon"
TRUNCATION_MARKER = "# TRUNCATED"


@dataclass(frozen=True)
class MetricsRecord:
    step: int
    episode: int
    reward: float
    reward_smooth: float
    p_loss: float
    train_loss: float
    epsilon: float

    def csv_row(self) -> str:
        vals = (self.reward, self.reward_smooth, self.p_loss, self.train_loss, self.epsilon)
        return f"{self.step},{self.episode}," + ",".join(repr(float(v)) for v in vals)


def moving_average(series, window: int = 200) -> np.ndarray:
    """Element i is the mean of elements max(0, i - window + 1) .. i."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    out = np.empty_like(x)
    head = min(window - 1, x.size)
    if head:
        out[:head] = np.cumsum(x[:head]) / np.arange(1, head + 1)
    if x.size >= window:
        out[window - 1:] = sliding_window_view(x, window).mean(axis=1)
    return out


def relative_change(series, window: int = 500) -> np.ndarray:
    """|s[i + window - 1] - s[i]| / |s[i]| for every window start i."""
    x = np.asarray(series, dtype=float)
    if x.size < window:
        return np.empty(0)
    start, end = x[: x.size - window + 1], x[window - 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.abs(end - start) / np.abs(start)


def stabilization_step(series, window: int = 500, tol: float = 0.1) -> int | None:
    """First step from which every later ``window``-long stretch of ``series``
    changes by less than ``tol`` relative to its starting value.

    Returns ``None`` if the series never settles (including when it is shorter
    than ``window``).
    """
    change = relative_change(series, window)
    stable = change < tol
    if not stable.size or not stable[-1]:
        return None
    unstable = np.flatnonzero(~stable)
    return 0 if unstable.size == 0 else int(unstable[-1] + 1)


def records(result, window: int = 200, upto: int | None = None):
    """MetricsRecord per completed step of a :class:`~ehrl.agents.training.TrainResult`."""
    n = len(result) if upto is None else upto
    smooth = moving_average(result.reward[:n], window)
    for t in range(n):
        yield MetricsRecord(t, int(result.episode[t]), float(result.reward[t]), float(smooth[t]),
                            float(result.p_loss[t]), float(result.train_loss[t]), float(result.epsilon[t]))


def write_metrics(path, result, window: int = 200, upto: int | None = None, truncated: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [HEADER] + [r.csv_row() for r in records(result, window, upto)]
    if truncated:
        lines.append(f"{TRUNCATION_MARKER} after {len(lines) - 1} steps")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_metrics(path) -> dict:
    """Columns of a metric file as arrays; ``truncated`` tells whether the marker is present."""
    text = Path(path).read_text().splitlines()
    if not text or text[0] != HEADER:
        raise ValueError(f"{path}: missing metrics header")
    truncated = bool(text) and text[-1].startswith(TRUNCATION_MARKER)
    rows = [line.split(",") for line in text[1:] if line and not line.startswith("#")]
    cols = HEADER.split(",")
    data = {c: np.array([float(r[i]) for r in rows]) for i, c in enumerate(cols)}
    data["step"] = data["step"].astype(np.int64)
    data["episode"] = data["episode"].astype(np.int64)
    data["truncated"] = truncated
    return data
