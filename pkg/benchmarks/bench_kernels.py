"""Compiled versus pure-numpy timings of the hot kernels.

    python3 benchmarks/bench_kernels.py --n 2000 --b 4 --repeats 3

Each kernel is called once untimed so numba compilation is excluded.
"""

import argparse
import time

import numpy as np

from hsdc import _kernels


def best_of(fn, repeats):
    fn()
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description="Benchmark the numba kernels against numpy")
    parser.add_argument("--n", type=int, default=2000, help="band matrix size")
    parser.add_argument("--b", type=int, default=4, help="bandwidth of the sweep")
    parser.add_argument("--m", type=int, default=250, help="pivoted Cholesky size")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not _kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(42)

    G = rng.standard_normal((args.m, args.m // 2))
    M = G @ G.T
    tol = 1e-8 * np.linalg.norm(M)

    band = np.zeros((args.b + 1, args.n))
    band[0] = rng.standard_normal(args.n)
    band[1, :-1] = rng.standard_normal(args.n - 1)
    angles = rng.uniform(0, 2 * np.pi, args.n - 1)
    c, s = np.cos(angles), np.sin(angles)

    cases = [
        (f"cholp m={args.m}", lambda: _kernels.cholp_numba(M, tol), lambda: _kernels.cholp_numpy(M, tol)),
        (f"sweep n={args.n} b={args.b}", lambda: _kernels.sweep_numba(band, args.b, c, s),
         lambda: _kernels.sweep_numpy(band, args.b, c, s)),
    ]
    print(f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, fast, slow in cases:
        t_fast = best_of(fast, args.repeats)
        t_slow = best_of(slow, args.repeats)
        print(f"{name:<24}{t_fast:>12.4f}{t_slow:>12.4f}{t_slow / t_fast:>10.1f}")


if __name__ == "__main__":
    main()
