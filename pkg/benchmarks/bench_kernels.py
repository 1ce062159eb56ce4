"""Time each hot kernel under its numba and pure-numpy forms.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call (compilation, or loading the on-disk cache) is excluded.
Both forms are also compared for agreement on the benchmark inputs.
"""
import argparse
import time
from itertools import combinations

import numpy as np

from ehrl._jit import HAVE_NUMBA
from ehrl._kernels import IMPLEMENTATIONS


def inputs(rng):
    n_steps, n = 2000, 10
    pos = rng.uniform(0, 500, size=(n, 2))
    angles = rng.uniform(0, 2 * np.pi, size=(n_steps, n))
    arrivals = rng.poisson(1.0, size=(n_steps, n)).astype(np.int64)
    schedule = np.zeros((n_steps, n), dtype=np.int64)
    schedule[np.arange(n_steps)[:, None], np.argsort(rng.random((n_steps, n)), axis=1)[:, :3]] = 1
    d, nh, w_len = 30, 64, 10
    w = rng.normal(scale=0.1, size=(d + nh, 4 * nh))
    b = np.zeros(4 * nh)
    x1 = rng.normal(size=(1, w_len, d))
    x16 = rng.normal(size=(16, w_len, d))
    dp_n, dp_k, cap, horizon = 5, 2, 4, 50
    subsets = np.zeros((len(list(combinations(range(dp_n), dp_k))), dp_n), dtype=np.int64)
    for a, sel in enumerate(combinations(range(dp_n), dp_k)):
        subsets[a, list(sel)] = 1
    rates = rng.exponential(1.0, size=(horizon, dp_n))
    dp_arr = rng.poisson(1.0, size=(horizon, dp_n)).astype(np.int64)
    return {
        "walk_block": [(pos, angles, 1.0, 500.0)],
        "battery_rollout": [(np.full(n, 2, dtype=np.int64), arrivals, schedule, 2, 5)],
        "lstm_forward": [(x1, w, b), (x16, w, b)],
        "lstm_backward": [(x, w) for x in (x1, x16)],
        "dp_backward": [(rates, dp_arr, subsets, 2, cap, 1.0)],
    }


def timed(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def agree(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(u, v, rtol=1e-9, atol=1e-12) for u, v in zip(a, b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba not importable; only the numpy forms exist")
    rng = np.random.default_rng(args.seed)
    cases = inputs(rng)
    # backward needs a forward cache for the same batch
    fwd = IMPLEMENTATIONS["lstm_forward"][1]
    cases["lstm_backward"] = [(x, w, *fwd(x, w, cases["lstm_forward"][0][2]),
                               rng.normal(size=(x.shape[0], w.shape[1] // 4)))
                              for x, w in cases["lstm_backward"]]

    print(f"{'kernel':<16}{'input':<16}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  agree")
    for name, (nb_fn, np_fn) in IMPLEMENTATIONS.items():
        for case in cases[name]:
            shape = "x".join(str(s) for s in np.shape(case[0]))
            if HAVE_NUMBA:
                nb_fn(*case)  # compile or load from cache
                t_nb, out_nb = timed(nb_fn, case, args.repeat)
            t_np, out_np = timed(np_fn, case, args.repeat)
            if HAVE_NUMBA:
                ok = agree(out_nb, out_np)
                print(f"{name:<16}{shape:<16}{t_nb * 1e3:>10.3f}{t_np * 1e3:>10.3f}{t_np / t_nb:>9.1f}  {ok}")
            else:
                print(f"{name:<16}{shape:<16}{'-':>10}{t_np * 1e3:>10.3f}{'-':>9}  -")


if __name__ == "__main__":
    main()
