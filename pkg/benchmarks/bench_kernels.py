"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best of ``--repeat`` runs after one warm-up call (the
warm-up also absorbs numba compilation). The last row times a whole
clustering run with each backend switched on through ``kernels.USE_NUMBA``.
"""

import argparse
import time

import numpy as np

from lgpdiar import _accel, kernels
from lgpdiar.cluster import ClusterConfig, cluster


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    n, k, d = 2000, 10, 128
    Z = rng.standard_normal((n, d))
    g = rng.dirichlet(np.ones(k), size=n)
    counts, sums = g.sum(0), g.T @ Z
    psi = rng.uniform(0.5, 10, d)
    lw = np.log(np.full(k, 1.0 / k))
    act = np.ones(k, bool)
    e = rng.standard_normal((20000, 64))
    C = rng.standard_normal((10, d))
    return {
        "loo_log_scores (N=2000 K=10 D=128)": (
            lambda f: f(Z, g, counts, sums, psi, lw, act, 0.9, 1.0),
            kernels.loo_log_scores_numba, kernels.loo_log_scores_numpy),
        "loo_sweep (N=2000 K=10 D=128)": (
            lambda f: f(Z, g.copy(), counts.copy(), sums.copy(), psi, lw, act, 0.9, 1.0),
            kernels.loo_sweep_numba, kernels.loo_sweep_numpy),
        "ar1_filter (20000 x 64)": (
            lambda f: f(e, 0.9), kernels.ar1_filter_numba, kernels.ar1_filter_numpy),
        "nearest_centroid (N=2000 K=10 D=128)": (
            lambda f: f(Z, C), kernels.nearest_centroid_numba, kernels.nearest_centroid_numpy),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if not _accel.HAS_NUMBA:
        print("numba is not importable; both columns run the numpy code")
    print(f"{'kernel':40s} {'numba [ms]':>12s} {'numpy [ms]':>12s} {'speedup':>8s}")
    for name, (call, fast, slow) in cases(rng).items():
        tf = best_time(lambda: call(fast), args.repeat)
        ts = best_time(lambda: call(slow), args.repeat)
        print(f"{name:40s} {tf * 1e3:12.2f} {ts * 1e3:12.2f} {ts / tf:8.1f}x")

    Z = np.vstack([rng.normal(m, 1.0, (150, 32)) for m in rng.normal(0, 4, (3, 32))])
    cfg = ClusterConfig(max_iterations=20)
    timing = {}
    for use in (True, False):
        kernels.USE_NUMBA = use
        timing[use] = best_time(lambda: cluster(Z, np.full(32, 16.0), cfg), args.repeat)
    kernels.USE_NUMBA = _accel.USE_NUMBA
    print(f"{'cluster() end to end (N=450 D=32)':40s} {timing[True] * 1e3:12.2f} "
          f"{timing[False] * 1e3:12.2f} {timing[False] / timing[True]:8.1f}x")


if __name__ == "__main__":
    main()
