"""Compare the compiled and NumPy pairwise kernels.

Run: python3 benchmarks/bench_kernels.py [--sizes 64 256 1024] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from stable_est import _kernels_py

try:
    from stable_est import _kernels as _compiled
except ImportError:
    _compiled = None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 256, 1024])
    ap.add_argument("--dim", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _compiled is None:
        print("compiled extension not built; only the NumPy backend is timed")
    g = np.random.default_rng(0)
    print(f"{'K':>6} {'kernel':>18} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for K in args.sizes:
        out = g.standard_normal((K, args.dim))
        w = g.integers(1, 5, K).astype(float)
        cases = {
            "power_sum(p=1.5)": lambda m: m.weighted_power_sum(out, w, 1.5),
            "max_dist": lambda m: m.weighted_max_dist(out, w),
        }
        for name, call in cases.items():
            t_py = min(timeit.repeat(lambda: call(_kernels_py), number=1, repeat=args.repeat)) * 1e3
            if _compiled is None:
                print(f"{K:>6} {name:>18} {t_py:>10.3f} {'-':>10} {'-':>8}")
                continue
            t_c = min(timeit.repeat(lambda: call(_compiled), number=1, repeat=args.repeat)) * 1e3
            print(f"{K:>6} {name:>18} {t_py:>10.3f} {t_c:>10.3f} {t_py / t_c:>8.2f}")


if __name__ == "__main__":
    main()
