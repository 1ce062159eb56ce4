"""Network input encodings."""
from __future__ import annotations

import numpy as np


def scale_gains(gains, low_db: float = -140.0, high_db: float = -60.0) -> np.ndarray:
    """Channel gains -> dB -> affine map of [low_db, high_db] onto [-1, 1], clipped."""
    g = np.asarray(gains, dtype=float)
    db = 10.0 * np.log10(np.maximum(g, 1e-300))
    return np.clip(2.0 * (db - low_db) / (high_db - low_db) - 1.0, -1.0, 1.0)


def access_state(batteries, gains, capacity: int, low_db: float = -140.0, high_db: float = -60.0) -> np.ndarray:
    """One-step sequence (1, 2N): batteries / C followed by scaled gains."""
    b = np.asarray(batteries, dtype=float) / capacity
    return np.concatenate([b, scale_gains(gains, low_db, high_db)])[None, :]


def control_input(b_norm, gains_scaled) -> np.ndarray:
    """Input of the control layer from normalized battery estimates, (B, 1, 2N)."""
    b_norm = np.atleast_2d(np.asarray(b_norm, dtype=float))
    g = np.atleast_2d(np.asarray(gains_scaled, dtype=float))
    if b_norm.shape != g.shape:
        raise ValueError(f"battery estimates {b_norm.shape} and gains {g.shape} differ in shape")
    return np.concatenate([b_norm, g], axis=1)[:, None, :]
