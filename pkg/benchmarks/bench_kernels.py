"""Time the compiled kernels against their pure-Python twins.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each case checks that both backends return identical results before
timing them.
"""
import argparse
import time

import numpy as np

from calibrl import _pykernels, kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    stock = rng.integers(0, 10, 5)
    acts = rng.integers(0, 51, (200, 5))
    dem = rng.integers(0, 30, (30, 5))
    for name, mode in kernels.SELLING_MODES.items():
        yield (f"rollout {name} 200x30x5",
               lambda impl, mode=mode: kernels.rollout_values(stock, acts, dem, 11, mode, impl=impl))
    big = rng.integers(0, 40, 8)
    demands = rng.integers(0, 200, 2000).tolist()
    yield "sell_units x2000", lambda impl: [kernels.sell_units(big, d, s, impl=impl)[1]
                                             for s, d in enumerate(demands)]
    y = rng.normal(size=20_000).cumsum() * 0.01 + rng.normal(size=20_000)
    yield "pava n=20000", lambda impl: kernels.pava(y, impl=impl)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.BACKEND != "compiled":
        raise SystemExit("compiled kernels are not available; build with `pip install -e . --no-build-isolation`")
    from calibrl import _ckernels

    print(f"{'case':28s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)):
        tp, a = best_of(lambda: fn(_pykernels), args.repeat)
        tc, b = best_of(lambda: fn(_ckernels), args.repeat)
        np.testing.assert_array_equal(np.asarray(a), np.asarray(b))
        print(f"{name:28s} {tp * 1e3:9.1f}ms {tc * 1e3:9.2f}ms {tp / tc:7.0f}x")


if __name__ == "__main__":
    main()
