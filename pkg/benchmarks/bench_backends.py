#!/usr/bin/env python3
"""Compare the compiled kernel extension against the pure-numpy fallback.

Times the block-Thomas factor/solve sweeps (the hot path of every solver in
the package) over a range of block orders, on both backends, and prints a
speedup table. Run as:

    python benchmarks/bench_backends.py [--n 256] [--repeats 5]
"""

import argparse
import time

import numpy as np

from blocktri import _kernels_py
from blocktri import core

try:
    from blocktri import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def bench_backend(kern, mat, f, repeats):
    best_factor = best_solve = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fact = kern.thomas_factor(mat.diag, mat.lower, mat.upper)
        best_factor = min(best_factor, time.perf_counter() - t0)
        t0 = time.perf_counter()
        kern.thomas_solve(*fact, mat.lower, f)
        best_solve = min(best_solve, time.perf_counter() - t0)
    return best_factor, best_solve


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=256, help="block rows")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--orders", default="2,4,8,16,32,64", help="block orders M")
    args = ap.parse_args()

    if _kernels_c is None:
        print("compiled extension not available; showing fallback only")

    rng = np.random.default_rng(0)
    orders = [int(v) for v in args.orders.split(",")]
    header = f"{'M':>4} {'N':>6} | {'py factor':>10} {'py solve':>10}"
    if _kernels_c is not None:
        header += f" | {'c factor':>10} {'c solve':>10} | {'x factor':>8} {'x solve':>8}"
    print(header)
    print("-" * len(header))
    for m in orders:
        mat = core.random_dominant(args.n, m, rng)
        f = rng.standard_normal((args.n, m))
        pf, ps = bench_backend(_kernels_py, mat, f, args.repeats)
        line = f"{m:>4} {args.n:>6} | {pf * 1e3:>9.2f}ms {ps * 1e3:>9.2f}ms"
        if _kernels_c is not None:
            cf, cs = bench_backend(_kernels_c, mat, f, args.repeats)
            line += (
                f" | {cf * 1e3:>9.2f}ms {cs * 1e3:>9.2f}ms"
                f" | {pf / cf:>7.1f}x {ps / cs:>7.1f}x"
            )
            # same arithmetic on both sides
            fa = _kernels_py.thomas_factor(mat.diag, mat.lower, mat.upper)
            fb = _kernels_c.thomas_factor(mat.diag, mat.lower, mat.upper)
            xa = _kernels_py.thomas_solve(*fa, mat.lower, f)
            xb = _kernels_c.thomas_solve(*fb, mat.lower, f)
            scale = np.abs(xa).max()
            assert np.abs(xa - xb).max() <= 1e-12 * scale, "backend disagreement"
        print(line)


if __name__ == "__main__":
    main()
