"""Double-precision LSTM + dense network with hand-written backprop.

A network is one LSTM layer unrolled over an input sequence followed by a dense
layer on the last hidden state. Gate blocks inside ``lstm_w``/``lstm_b`` are
ordered forget, input, cell, output. Input batches have shape (B, T, D).

Checkpoints are ``.npz`` archives with one array per key::

    lstm.{f,i,g,o}.w   (D + H, H)   rows 0..D-1 act on the input, the rest on h
    lstm.{f,i,g,o}.b   (H,)
    dense.w            (H, O)
    dense.b            (O,)
    meta.activation    0-d string array, "tanh" or "identity"
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

GATES = ("f", "i", "g", "o")
ACTIVATIONS = ("tanh", "identity")


class NumericalFault(FloatingPointError):
    """A loss or gradient became non-finite."""


@dataclass
class LstmParams:
    w: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.b.shape[0] // 4

    def gate(self, name: str):
        h = self.hidden
        k = GATES.index(name)
        return self.w[:, k * h:(k + 1) * h], self.b[k * h:(k + 1) * h]


@dataclass
class DenseParams:
    w: np.ndarray
    b: np.ndarray
    activation: str = "identity"


@dataclass(eq=False)
class NetworkParams:
    lstm_w: np.ndarray
    lstm_b: np.ndarray
    dense_w: np.ndarray
    dense_b: np.ndarray
    activation: str = "identity"
    version: int = field(default=0, compare=False)

    ARRAYS = ("lstm_w", "lstm_b", "dense_w", "dense_b")

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        nh = self.dense_w.shape[0]
        if self.lstm_w.shape[1] != 4 * nh or self.lstm_b.shape != (4 * nh,):
            raise ValueError("LSTM and dense shapes disagree")
        if self.lstm_w.shape[0] <= nh or self.dense_b.shape != (self.dense_w.shape[1],):
            raise ValueError("inconsistent parameter shapes")

    @property
    def n_in(self) -> int:
        return self.lstm_w.shape[0] - self.n_hidden

    @property
    def n_hidden(self) -> int:
        return self.dense_w.shape[0]

    @property
    def n_out(self) -> int:
        return self.dense_w.shape[1]

    @property
    def lstm(self) -> LstmParams:
        return LstmParams(self.lstm_w, self.lstm_b)

    @property
    def dense(self) -> DenseParams:
        return DenseParams(self.dense_w, self.dense_b, self.activation)

    def arrays(self):
        return [getattr(self, k) for k in self.ARRAYS]

    def copy(self) -> "NetworkParams":
        return NetworkParams(*(a.copy() for a in self.arrays()), activation=self.activation)

    def assign(self, other: "NetworkParams") -> None:
        for k in self.ARRAYS:
            getattr(self, k)[...] = getattr(other, k)
        self.version += 1

    def to_dict(self) -> dict:
        out = {}
        for name in GATES:
            w, b = self.lstm.gate(name)
            out[f"lstm.{name}.w"] = w.copy()
            out[f"lstm.{name}.b"] = b.copy()
        out["dense.w"] = self.dense_w.copy()
        out["dense.b"] = self.dense_b.copy()
        return out

    @classmethod
    def from_dict(cls, d: dict, activation: str = "identity") -> "NetworkParams":
        w = np.concatenate([d[f"lstm.{g}.w"] for g in GATES], axis=1)
        b = np.concatenate([d[f"lstm.{g}.b"] for g in GATES])
        return cls(w, b, np.array(d["dense.w"], dtype=float), np.array(d["dense.b"], dtype=float), activation)


@dataclass
class GradientSet:
    lstm_w: np.ndarray
    lstm_b: np.ndarray
    dense_w: np.ndarray
    dense_b: np.ndarray

    def arrays(self):
        return [self.lstm_w, self.lstm_b, self.dense_w, self.dense_b]

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "GradientSet":
        return cls(*(np.zeros_like(a) for a in params.arrays()))

    def scale(self, s: float) -> "GradientSet":
        return GradientSet(*(a * s for a in self.arrays()))

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet(*(a + b for a, b in zip(self.arrays(), other.arrays())))

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(a * a) for a in self.arrays())))


def save_checkpoint(path, params: NetworkParams, **extra) -> None:
    arrays = params.to_dict()
    arrays["meta.activation"] = np.array(params.activation)
    for k, v in extra.items():
        arrays[k] = np.asarray(v)
    np.savez(path, **arrays)


def load_checkpoint(path) -> NetworkParams:
    with np.load(path) as z:
        d = {k: z[k] for k in z.files}
    return NetworkParams.from_dict(d, activation=str(d.get("meta.activation", "identity")))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def weight_init(n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator,
                activation: str = "identity") -> NetworkParams:
    """Uniform in +-1/sqrt(fan_in) for every array; forget-gate bias set to +1."""
    lim_l = 1.0 / np.sqrt(n_in + n_hidden)
    lim_d = 1.0 / np.sqrt(n_hidden)
    lstm_w = rng.uniform(-lim_l, lim_l, size=(n_in + n_hidden, 4 * n_hidden))
    lstm_b = rng.uniform(-lim_l, lim_l, size=4 * n_hidden)
    lstm_b[:n_hidden] = 1.0
    dense_w = rng.uniform(-lim_d, lim_d, size=(n_hidden, n_out))
    dense_b = rng.uniform(-lim_d, lim_d, size=n_out)
    return NetworkParams(lstm_w, lstm_b, dense_w, dense_b, activation)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_cell_forward(x, h_prev, c_prev, lstm: LstmParams):
    """One LSTM step for a batch (B, D); returns ``(h, c, cache)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h_prev = np.atleast_2d(np.asarray(h_prev, dtype=float))
    c_prev = np.atleast_2d(np.asarray(c_prev, dtype=float))
    nh = lstm.hidden
    if x.shape[1] + nh != lstm.w.shape[0] or h_prev.shape[1] != nh or c_prev.shape != h_prev.shape:
        raise ValueError(f"shape mismatch: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}, w {lstm.w.shape}")
    xh = np.concatenate([x, h_prev], axis=1)
    a = xh @ lstm.w + lstm.b
    f = _sigmoid(a[:, :nh])
    i = _sigmoid(a[:, nh:2 * nh])
    g = np.tanh(a[:, 2 * nh:3 * nh])
    o = _sigmoid(a[:, 3 * nh:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, {"xh": xh, "f": f, "i": i, "g": g, "o": o, "c_prev": c_prev, "c": c}


@dataclass
class ForwardCache:
    x: np.ndarray
    hs: np.ndarray
    cs: np.ndarray
    gates: np.ndarray
    out: np.ndarray
    params_id: int
    version: int


def _as_batch(x, n_in):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != n_in:
        raise ValueError(f"expected input (B, T, {n_in}), got {np.shape(x)}")
    if x.shape[1] < 1:
        raise ValueError("empty input sequence")
    return np.ascontiguousarray(x)


def network_forward(x, params: NetworkParams, return_cache: bool = False):
    """Run the LSTM over ``x`` (B, T, D) or (T, D) and the dense head on h_T.

    Output has shape (B, O). Parameters are not modified.
    """
    xb = _as_batch(x, params.n_in)
    hs, cs, gates = _kernels.lstm_forward(xb, params.lstm_w, params.lstm_b)
    z = hs[:, -1, :] @ params.dense_w + params.dense_b
    out = np.tanh(z) if params.activation == "tanh" else z
    if not return_cache:
        return out
    return out, ForwardCache(xb, hs, cs, gates, out, id(params), params.version)


def backward(cache: ForwardCache, d_out, params: NetworkParams):
    """Gradients of a scalar loss given ``d_out`` = dLoss/dOutput (B, O).

    Returns ``(GradientSet, dx)`` with gradients summed over the batch and
    ``dx`` the gradient w.r.t. the input sequence.
    """
    if cache.params_id != id(params) or cache.version != params.version:
        raise ValueError("cache was produced by different or since-updated parameters")
    d_out = np.asarray(d_out, dtype=float)
    if d_out.shape != cache.out.shape:
        raise ValueError(f"d_out shape {d_out.shape} != output shape {cache.out.shape}")
    dz = d_out * (1.0 - cache.out ** 2) if params.activation == "tanh" else d_out
    h_last = cache.hs[:, -1, :]
    d_dense_w = h_last.T @ dz
    d_dense_b = dz.sum(axis=0)
    dh = np.ascontiguousarray(dz @ params.dense_w.T)
    dw, db, dx = _kernels.lstm_backward(cache.x, params.lstm_w, cache.hs, cache.cs, cache.gates, dh)
    return GradientSet(dw, db, d_dense_w, d_dense_b), dx


def clip_global_norm(grads: GradientSet, max_norm: float) -> GradientSet:
    norm = grads.norm()
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads
    return grads.scale(max_norm / norm)


def sgd_step(params: NetworkParams, grads: GradientSet, learning_rate: float) -> NetworkParams:
    """In-place ``theta <- theta - lr * g``."""
    for name, g in zip(NetworkParams.ARRAYS, grads.arrays()):
        p = getattr(params, name)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter {name} shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalFault(f"{np.count_nonzero(~np.isfinite(g))} non-finite gradient entries in {name}")
    if learning_rate == 0.0:
        return params
    for name, g in zip(NetworkParams.ARRAYS, grads.arrays()):
        getattr(params, name)[...] -= learning_rate * g
    params.version += 1
    return params


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def relative_error(analytic, numeric, floor: float = 1e-12) -> float:
    """Norm-wise ||a - n|| / max(||a|| + ||n||, floor) over one parameter array."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    if not a.size:
        return 0.0
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), floor))


def elementwise_relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """max_i |a_i - n_i| / max(|a_i| + |n_i|, floor). Dominated by roundoff of the
    difference quotient on entries whose gradient is near zero."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    den = np.maximum(np.abs(a) + np.abs(n), floor)
    return float(np.max(np.abs(a - n) / den)) if a.size else 0.0


def numeric_gradient(loss_fn, arrays, epsilon: float = 1e-5):
    """Central differences of ``loss_fn()`` w.r.t. every entry of ``arrays``.

    ``loss_fn`` must read the arrays at call time; entries are perturbed in
    place and restored.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + epsilon
            up = loss_fn()
            flat[j] = old - epsilon
            down = loss_fn()
            flat[j] = old
            gflat[j] = (up - down) / (2.0 * epsilon)
        out.append(g)
    return out


def finite_diff_gradcheck(params: NetworkParams, x, loss_weights=None, epsilon: float = 1e-5,
                          grads: GradientSet | None = None, elementwise: bool = True) -> float:
    """Compare :func:`backward` with central differences on ``sum(w * out)``.

    ``grads`` lets a caller inject a (possibly corrupted) analytic gradient.
    Returns the max relative error over all parameters, per entry by default
    so that a single wrong entry is not diluted by the rest of its array.
    """
    out, cache = network_forward(x, params, return_cache=True)
    w = np.ones_like(out) if loss_weights is None else np.asarray(loss_weights, dtype=float)
    if grads is None:
        grads, _ = backward(cache, w, params)

    def loss():
        return float(np.sum(w * network_forward(x, params)))

    numeric = numeric_gradient(loss, params.arrays(), epsilon)
    err = elementwise_relative_error if elementwise else relative_error
    return max(err(a, n) for a, n in zip(grads.arrays(), numeric))
