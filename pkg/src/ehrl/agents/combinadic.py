"""Lexicographic ranking of K-subsets of {0..N-1}.

Rank r of a sorted subset (c_1 < ... < c_K) counts the subsets that precede it
in lexicographic order, so {0..K-1} has rank 0 and {N-K..N-1} has rank C(N,K)-1.
"""
from functools import lru_cache
from math import comb

import numpy as np

DEFAULT_CAP = 4096


def n_actions(n: int, k: int) -> int:
    return comb(n, k)


def action_encode(selected, n: int, k: int) -> int:
    c = sorted(int(i) for i in selected)
    if len(c) != k or len(set(c)) != k or (c and (c[0] < 0 or c[-1] >= n)):
        raise ValueError(f"{selected!r} is not a {k}-subset of range({n})")
    rank = 0
    prev = -1
    for pos, ci in enumerate(c):
        for v in range(prev + 1, ci):
            rank += comb(n - v - 1, k - pos - 1)
        prev = ci
    return rank


def action_decode(index: int, n: int, k: int) -> tuple:
    total = comb(n, k)
    if not 0 <= index < total:
        raise IndexError(f"action index {index} outside [0, {total})")
    out = []
    v = 0
    r = int(index)
    for pos in range(k):
        while True:
            block = comb(n - v - 1, k - pos - 1)
            if r < block:
                break
            r -= block
            v += 1
        out.append(v)
        v += 1
    return tuple(out)


@lru_cache(maxsize=32)
def subset_table(n: int, k: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """(C(N,K), K) array of all subsets in rank order."""
    total = comb(n, k)
    if total > cap:
        raise ValueError(f"C({n},{k}) = {total} exceeds the enumeration cap {cap}")
    table = np.array([action_decode(r, n, k) for r in range(total)], dtype=np.int64)
    table.setflags(write=False)
    return table


def indicator_table(n: int, k: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """(C(N,K), N) 0/1 rows; row r is the indicator vector of subset r."""
    table = subset_table(n, k, cap)
    ind = np.zeros((table.shape[0], n), dtype=np.int64)
    np.put_along_axis(ind, table, 1, axis=1)
    return ind
