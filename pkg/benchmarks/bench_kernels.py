"""Benchmark the numba kernels against the pure-numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--side 256] [--reps 5]

Both lanes compute identical results (see tests/test_kernels.py); this script
only measures throughput.  The first numba call includes JIT compilation and
is excluded by a warmup round.
"""

import argparse
import time

import numpy as np

import rcm
from rcm._kernels import build_walk_tables, make_neg_laplacian, numpy_impl

try:
    from rcm._kernels import numba_impl
except ImportError:
    numba_impl = None


def _time(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_matvec(env, reps):
    u = np.random.default_rng(0).normal(size=env.lattice.num_vertices)
    rows = []
    for name, impl in (("numpy", numpy_impl), ("numba", numba_impl)):
        if impl is None:
            continue
        apply_a = make_neg_laplacian(env, impl=impl)
        apply_a(u)  # warmup / JIT
        dt = _time(lambda: apply_a(u), reps)
        rows.append((f"matvec[{name}]", dt, env.lattice.num_vertices / dt / 1e6))
    return rows


def bench_walk(env, reps, count=2000, horizon=200.0):
    tables = build_walk_tables(env)
    c0 = env.lattice.coords_of(0)
    q = np.array([horizon])
    rows = []
    for name, impl in (("numpy", numpy_impl), ("numba", numba_impl)):
        if impl is None:
            continue
        impl.walk_positions(tables, 0, c0, q, 10, 1, False)  # warmup / JIT
        dt = _time(lambda: impl.walk_positions(tables, 0, c0, q, count, 1, False),
                   reps)
        _, jumps = impl.walk_positions(tables, 0, c0, q, count, 1, False)
        rows.append((f"walk[{name}]", dt, float(jumps.sum()) / dt / 1e6))
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--side", type=int, default=256)
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args()

    env = rcm.generate_env(rcm.spec_uniform_elliptic(0.5, 2.0, 2, args.side, seed=0))
    print(f"torus side {args.side} (d=2, {env.lattice.num_vertices} vertices); "
          f"best of {args.reps}")
    print(f"{'kernel':<16} {'seconds':>10} {'Mops/s':>10}")
    for name, dt, rate in bench_matvec(env, args.reps) + bench_walk(env, args.reps):
        print(f"{name:<16} {dt:>10.5f} {rate:>10.1f}")
    if numba_impl is None:
        print("numba unavailable; only the numpy lane was measured")


if __name__ == "__main__":
    main()
