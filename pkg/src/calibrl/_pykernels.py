"""Pure-Python twins of the compiled kernels in ``_ckernels.pyx``.

Used when the extension is not built (or ``CALIBRL_PURE_PYTHON=1``). The
random stream is SplitMix64 on Python ints so both backends draw the same
numbers, and floating-point operations happen in the same order.
"""
from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
EXPECTED, SAMPLED, FIFO = 0, 1, 2


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


class _SplitMix:
    __slots__ = ("state",)

    def __init__(self, state: int):
        self.state = state

    def below(self, n: int) -> int:
        self.state = (self.state + GOLDEN) & MASK
        return ((_mix(self.state) >> 32) * n) >> 32


def _stream(seed: int, m: int, k: int, horizon: int) -> _SplitMix:
    return _SplitMix(_mix((seed + GOLDEN * (m * horizon + k + 1)) & MASK))


def _remove_random(x: list[int], total: int, n: int, rng: _SplitMix) -> list[int]:
    removed = [0] * len(x)
    remaining = total
    for _ in range(n):
        r = rng.below(remaining)
        l = 0
        while r >= x[l]:
            r -= x[l]
            l += 1
        x[l] -= 1
        removed[l] += 1
        remaining -= 1
    return removed


def _sell_units(x: list[int], demand: int, rng: _SplitMix, fifo: bool) -> int:
    total = sum(x)
    sales = min(demand, total)
    if sales == total:
        x[:] = [0] * len(x)
    elif sales > 0:
        if fifo:
            r = sales
            for l in range(len(x)):
                if x[l] >= r:
                    x[l] -= r
                    break
                r -= x[l]
                x[l] = 0
        elif 2 * sales <= total:
            _remove_random(x, total, sales, rng)
        else:
            x[:] = _remove_random(x, total, total - sales, rng)
    return demand - sales


def sell_units(x, demand, seed, mode=SAMPLED):
    if not 1 <= len(x) <= 64:
        raise ValueError("shelf life must be in [1, 64]")
    stock = [int(v) for v in x]
    stockout = _sell_units(stock, int(demand), _SplitMix(_mix(int(seed) & MASK)), mode == FIFO)
    x[:] = stock
    return stockout


def rollout_values(stock, actions, demands, order, shared, seed, mode=EXPECTED):
    stock = [float(v) for v in stock]
    actions = np.asarray(actions).tolist()
    demands = np.asarray(demands, dtype=np.float64).tolist()
    order = [int(v) for v in order]
    shared = [int(v) for v in shared]
    seed = int(seed) & MASK
    shelf = len(stock)
    n_traj = len(actions)
    horizon = len(actions[0]) if n_traj else 0
    n_mc = len(demands)
    if not 1 <= shelf <= 64 or horizon > 64:
        raise ValueError("shelf life must be in [1, 64] and horizon at most 64")
    if mode not in (EXPECTED, SAMPLED, FIFO):
        raise ValueError(f"unknown selling mode {mode}")
    # states[k][m]: stock before step k on path m; cum[k][m]: reward of steps < k
    states = [[list(stock) for _ in range(n_mc)]] + [None] * horizon
    cum = [[0.0] * n_mc] + [None] * horizon
    total = [0.0] * n_traj
    for idx in range(n_traj):
        j = order[idx]
        for k in range(shared[idx], horizon):
            a = float(actions[j][k])
            nxt, r = [], []
            for m in range(n_mc):
                x = list(states[k][m])
                rm = cum[k][m]
                x[-1] += a
                d = demands[m][k]
                if mode == EXPECTED:
                    total_m = 0.0
                    for v in x:
                        total_m = total_m + v
                    sales = d if d < total_m else total_m
                    keep = (1.0 - sales / total_m) if total_m > 0.0 else 1.0
                    x = [v * keep for v in x]
                    rm = rm - (x[0] + (d - sales))
                else:
                    xi = [int(v) for v in x]
                    stockout = _sell_units(xi, int(d), _stream(seed, m, k, horizon), mode == FIFO)
                    x = [float(v) for v in xi]
                    rm = rm - float(xi[0] + stockout)
                x = x[1:] + [0.0]
                nxt.append(x)
                r.append(rm)
            states[k + 1] = nxt
            cum[k + 1] = r
        acc = 0.0
        for m in range(n_mc):
            acc = acc + cum[horizon][m]
        total[j] = acc
    return np.asarray(total, dtype=np.float64) / n_mc


def pava(y, w):
    values: list[float] = []
    weights: list[float] = []
    sizes: list[int] = []
    for yi, wi in zip(np.asarray(y, dtype=float).tolist(), np.asarray(w, dtype=float).tolist()):
        values.append(yi)
        weights.append(wi)
        sizes.append(1)
        while len(values) > 1 and values[-2] > values[-1]:
            tw = weights[-2] + weights[-1]
            values[-2] = (weights[-2] * values[-2] + weights[-1] * values[-1]) / tw
            weights[-2] = tw
            sizes[-2] += sizes[-1]
            del values[-1], weights[-1], sizes[-1]
    return np.repeat(np.asarray(values, dtype=np.float64), sizes)
