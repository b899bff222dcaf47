"""Time the k-means assign/accumulate kernel: numba vs the numpy fallback.

    python benchmarks/bench_kernels.py [--n 10000 100000 1000000] [--k 10 50] [--repeat 5]
"""

import argparse
import time

import numpy as np

from sealmr import kernels


def best_of(fn, pts, centers, repeat):
    fn(pts, centers)  # warm-up (and JIT compile)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(pts, centers)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    ap.add_argument("--k", type=int, nargs="+", default=[10, 50])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.assign_accumulate_numba is None:
        print("numba unavailable (or SEALMR_DISABLE_NUMBA set); timing numpy only")
    rng = np.random.default_rng(0)
    print(f"{'n':>9} {'k':>4} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for k in args.k:
        for n in args.n:
            pts = rng.uniform(0, 1000, (n, 2))
            centers = rng.uniform(0, 1000, (k, 2))
            t_np = best_of(kernels.assign_accumulate_numpy, pts, centers, args.repeat)
            if kernels.assign_accumulate_numba is not None:
                t_nb = best_of(kernels.assign_accumulate_numba, pts, centers, args.repeat)
                print(f"{n:>9} {k:>4} {t_np * 1e3:>10.2f} {t_nb * 1e3:>10.2f} {t_np / t_nb:>7.1f}x")
            else:
                print(f"{n:>9} {k:>4} {t_np * 1e3:>10.2f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
