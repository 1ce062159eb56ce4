"""Hot inner loops.

Each kernel has an explicit-loop form (``_nb_*``, compiled by numba) and a
vectorized numpy form (``_np_*``). The unprefixed public name is bound by
:func:`ehrl._jit.pick`. Both forms agree to floating-point rounding; within one
backend results are bit-reproducible.
"""
import numpy as np

from ._jit import njit, pick


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------

@njit
def _nb_walk_block(pos, angles, speed, side):
    n_steps, n = angles.shape
    out = np.empty((n_steps, n, 2))
    cur = pos.copy()
    for t in range(n_steps):
        for i in range(n):
            for d in range(2):
                if d == 0:
                    v = cur[i, 0] + speed * np.cos(angles[t, i])
                else:
                    v = cur[i, 1] + speed * np.sin(angles[t, i])
                while v < 0.0 or v > side:
                    if v < 0.0:
                        v = -v
                    else:
                        v = 2.0 * side - v
                cur[i, d] = v
                out[t, i, d] = v
    return out


def _np_walk_block(pos, angles, speed, side):
    n_steps, n = angles.shape
    out = np.empty((n_steps, n, 2))
    step = speed * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    cur = pos.copy()
    for t in range(n_steps):
        cur = cur + step[t]
        while True:
            low = cur < 0.0
            high = cur > side
            if not (low.any() or high.any()):
                break
            cur = np.where(low, -cur, cur)
            cur = np.where(high, 2.0 * side - cur, cur)
        out[t] = cur
    return out


@njit
def _nb_battery_rollout(b0, arrivals, schedule, tx_power, capacity):
    n_steps, n = arrivals.shape
    batt = np.empty((n_steps + 1, n), dtype=np.int64)
    flags = np.zeros((n_steps, n), dtype=np.int64)
    violations = 0
    for i in range(n):
        batt[0, i] = b0[i]
    for t in range(n_steps):
        for i in range(n):
            b = batt[t, i]
            z = 1 if b >= tx_power else 0
            used = z * schedule[t, i] * tx_power
            if used > b:
                violations += 1
            nb = b + arrivals[t, i] - used
            if nb > capacity:
                nb = capacity
            if nb < 0 or nb > capacity:
                violations += 1
            flags[t, i] = z * schedule[t, i]
            batt[t + 1, i] = nb
    return batt, flags, violations


def _np_battery_rollout(b0, arrivals, schedule, tx_power, capacity):
    n_steps, n = arrivals.shape
    batt = np.empty((n_steps + 1, n), dtype=np.int64)
    flags = np.zeros((n_steps, n), dtype=np.int64)
    batt[0] = b0
    violations = 0
    for t in range(n_steps):
        b = batt[t]
        f = (b >= tx_power).astype(np.int64) * schedule[t]
        used = f * tx_power
        nb = np.minimum(capacity, b + arrivals[t] - used)
        violations += int(np.count_nonzero(used > b))
        violations += int(np.count_nonzero((nb < 0) | (nb > capacity)))
        flags[t] = f
        batt[t + 1] = nb
    return batt, flags, violations


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

@njit
def _nb_lstm_forward(x, w, b):
    nb, n_steps, d = x.shape
    h4 = w.shape[1]
    nh = h4 // 4
    hs = np.zeros((nb, n_steps + 1, nh))
    cs = np.zeros((nb, n_steps + 1, nh))
    gates = np.empty((nb, n_steps, h4))
    xh = np.empty((nb, d + nh))
    for t in range(n_steps):
        xh[:, :d] = x[:, t, :]
        xh[:, d:] = hs[:, t, :]
        a = np.dot(xh, w)
        for r in range(nb):
            for j in range(nh):
                f = 1.0 / (1.0 + np.exp(-(a[r, j] + b[j])))
                ig = 1.0 / (1.0 + np.exp(-(a[r, nh + j] + b[nh + j])))
                g = np.tanh(a[r, 2 * nh + j] + b[2 * nh + j])
                o = 1.0 / (1.0 + np.exp(-(a[r, 3 * nh + j] + b[3 * nh + j])))
                c = f * cs[r, t, j] + ig * g
                cs[r, t + 1, j] = c
                hs[r, t + 1, j] = o * np.tanh(c)
                gates[r, t, j] = f
                gates[r, t, nh + j] = ig
                gates[r, t, 2 * nh + j] = g
                gates[r, t, 3 * nh + j] = o
    return hs, cs, gates


def _np_lstm_forward(x, w, b):
    nb, n_steps, d = x.shape
    h4 = w.shape[1]
    nh = h4 // 4
    hs = np.zeros((nb, n_steps + 1, nh))
    cs = np.zeros((nb, n_steps + 1, nh))
    gates = np.empty((nb, n_steps, h4))
    wx, wh = w[:d], w[d:]
    for t in range(n_steps):
        a = x[:, t, :] @ wx + hs[:, t, :] @ wh + b
        sig = 1.0 / (1.0 + np.exp(-a[:, np.r_[0:2 * nh, 3 * nh:h4]]))
        f, ig, o = sig[:, :nh], sig[:, nh:2 * nh], sig[:, 2 * nh:]
        g = np.tanh(a[:, 2 * nh:3 * nh])
        cs[:, t + 1] = f * cs[:, t] + ig * g
        hs[:, t + 1] = o * np.tanh(cs[:, t + 1])
        gates[:, t, :nh] = f
        gates[:, t, nh:2 * nh] = ig
        gates[:, t, 2 * nh:3 * nh] = g
        gates[:, t, 3 * nh:] = o
    return hs, cs, gates


@njit
def _nb_lstm_backward(x, w, hs, cs, gates, dh_last):
    nb, n_steps, d = x.shape
    h4 = w.shape[1]
    nh = h4 // 4
    dw = np.zeros(w.shape)
    db = np.zeros(h4)
    dx = np.zeros(x.shape)
    dh = dh_last.copy()
    dc = np.zeros((nb, nh))
    da = np.empty((nb, h4))
    xh = np.empty((nb, d + nh))
    wt = np.ascontiguousarray(w.T)
    for t in range(n_steps - 1, -1, -1):
        for r in range(nb):
            for j in range(nh):
                f = gates[r, t, j]
                ig = gates[r, t, nh + j]
                g = gates[r, t, 2 * nh + j]
                o = gates[r, t, 3 * nh + j]
                tc = np.tanh(cs[r, t + 1, j])
                dcc = dc[r, j] + dh[r, j] * o * (1.0 - tc * tc)
                da[r, j] = dcc * cs[r, t, j] * f * (1.0 - f)
                da[r, nh + j] = dcc * g * ig * (1.0 - ig)
                da[r, 2 * nh + j] = dcc * ig * (1.0 - g * g)
                da[r, 3 * nh + j] = dh[r, j] * tc * o * (1.0 - o)
                dc[r, j] = dcc * f
        xh[:, :d] = x[:, t, :]
        xh[:, d:] = hs[:, t, :]
        dw += np.dot(np.ascontiguousarray(xh.T), da)
        for k in range(h4):
            s = 0.0
            for r in range(nb):
                s += da[r, k]
            db[k] += s
        dxh = np.dot(da, wt)
        dx[:, t, :] = dxh[:, :d]
        dh = np.ascontiguousarray(dxh[:, d:])
    return dw, db, dx


def _np_lstm_backward(x, w, hs, cs, gates, dh_last):
    nb, n_steps, d = x.shape
    h4 = w.shape[1]
    nh = h4 // 4
    dw = np.zeros(w.shape)
    db = np.zeros(h4)
    dx = np.zeros(x.shape)
    dh = dh_last.copy()
    dc = np.zeros((nb, nh))
    da = np.empty((nb, h4))
    for t in range(n_steps - 1, -1, -1):
        f = gates[:, t, :nh]
        ig = gates[:, t, nh:2 * nh]
        g = gates[:, t, 2 * nh:3 * nh]
        o = gates[:, t, 3 * nh:]
        tc = np.tanh(cs[:, t + 1])
        dcc = dc + dh * o * (1.0 - tc * tc)
        da[:, :nh] = dcc * cs[:, t] * f * (1.0 - f)
        da[:, nh:2 * nh] = dcc * g * ig * (1.0 - ig)
        da[:, 2 * nh:3 * nh] = dcc * ig * (1.0 - g * g)
        da[:, 3 * nh:] = dh * tc * o * (1.0 - o)
        dc = dcc * f
        xh = np.concatenate([x[:, t, :], hs[:, t, :]], axis=1)
        dw += xh.T @ da
        db += da.sum(axis=0)
        dxh = da @ w.T
        dx[:, t, :] = dxh[:, :d]
        dh = dxh[:, d:]
    return dw, db, dx


# ---------------------------------------------------------------------------
# offline dynamic program
# ---------------------------------------------------------------------------

@njit
def _nb_dp_backward(rates, arrivals, subsets, tx_power, capacity, gamma):
    n_steps, n = rates.shape
    n_act = subsets.shape[0]
    base = capacity + 1
    n_states = 1
    for _ in range(n):
        n_states *= base
    values = np.zeros((n_steps + 1, n_states))
    policy = np.zeros((n_steps, n_states), dtype=np.int64)
    batt = np.empty(n, dtype=np.int64)
    radix = np.empty(n, dtype=np.int64)
    radix[0] = 1
    for i in range(1, n):
        radix[i] = radix[i - 1] * base
    for t in range(n_steps - 1, -1, -1):
        for s in range(n_states):
            rem = s
            for i in range(n):
                batt[i] = rem % base
                rem //= base
            best = -np.inf
            best_a = 0
            for a in range(n_act):
                r = 0.0
                nxt = 0
                for i in range(n):
                    used = 0
                    if subsets[a, i] == 1 and batt[i] >= tx_power:
                        used = tx_power
                        r += rates[t, i]
                    nb = batt[i] + arrivals[t, i] - used
                    if nb > capacity:
                        nb = capacity
                    nxt += nb * radix[i]
                q = r + gamma * values[t + 1, nxt]
                if q > best:
                    best = q
                    best_a = a
            values[t, s] = best
            policy[t, s] = best_a
    return values, policy


def _np_dp_backward(rates, arrivals, subsets, tx_power, capacity, gamma):
    n_steps, n = rates.shape
    base = capacity + 1
    radix = base ** np.arange(n, dtype=np.int64)
    n_states = int(base ** n)
    digits = (np.arange(n_states, dtype=np.int64)[:, None] // radix) % base
    feasible = digits >= tx_power
    values = np.zeros((n_steps + 1, n_states))
    policy = np.zeros((n_steps, n_states), dtype=np.int64)
    for t in range(n_steps - 1, -1, -1):
        q = np.empty((subsets.shape[0], n_states))
        for a in range(subsets.shape[0]):
            z = feasible & (subsets[a] == 1)
            r = (z * rates[t]).sum(axis=1)
            nxt = np.minimum(capacity, digits + arrivals[t] - z * tx_power) @ radix
            q[a] = r + gamma * values[t + 1, nxt]
        policy[t] = np.argmax(q, axis=0)
        values[t] = q[policy[t], np.arange(n_states)]
    return values, policy


walk_block = pick(_nb_walk_block, _np_walk_block)
battery_rollout = pick(_nb_battery_rollout, _np_battery_rollout)


def _by_batch(numba_impl, numpy_impl):
    """Scalar-loop LSTM kernels only pay off for single sequences; batched
    calls are BLAS bound and the vectorized transcendental ops win."""
    if pick(numba_impl, numpy_impl) is numpy_impl:
        return numpy_impl

    def dispatch(x, *args):
        return (numba_impl if x.shape[0] == 1 else numpy_impl)(x, *args)

    dispatch.__name__ = numpy_impl.__name__[4:]
    return dispatch


lstm_forward = _by_batch(_nb_lstm_forward, _np_lstm_forward)
lstm_backward = _by_batch(_nb_lstm_backward, _np_lstm_backward)
dp_backward = pick(_nb_dp_backward, _np_dp_backward)

IMPLEMENTATIONS = {
    "walk_block": (_nb_walk_block, _np_walk_block),
    "battery_rollout": (_nb_battery_rollout, _np_battery_rollout),
    "lstm_forward": (_nb_lstm_forward, _np_lstm_forward),
    "lstm_backward": (_nb_lstm_backward, _np_lstm_backward),
    "dp_backward": (_nb_dp_backward, _np_dp_backward),
}
