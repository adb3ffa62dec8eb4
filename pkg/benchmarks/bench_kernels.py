"""Time the numba and numpy kernel backends on the same workload.

    python benchmarks/bench_kernels.py [--M 16] [--N 1024] [--d 64] [--blocks 4] [--repeat 3]

The first numba call compiles (or loads the on-disk cache); it is reported
separately and excluded from the steady-state timing.
"""

import argparse
import time

import numpy as np

from hfa import kernels
from hfa.blocks import attn_hfa_blocked
from hfa.reference import AttentionProblem


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--M", type=int, default=16)
    ap.add_argument("--N", type=int, default=1024)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--blocks", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    p = AttentionProblem.random(args.M, args.N, args.d, seed=0)
    print(f"M={args.M} N={args.N} d={args.d} blocks={args.blocks}")

    t_np, out_np = best_of(lambda: attn_hfa_blocked(p, args.blocks, backend="numpy"),
                           args.repeat)
    print(f"numpy  {t_np * 1e3:9.1f} ms")

    if kernels._jit is None:
        print("numba  unavailable (HFA_DISABLE_NUMBA set or numba missing)")
        return
    t0 = time.perf_counter()
    attn_hfa_blocked(p, args.blocks, backend="numba")
    warm = time.perf_counter() - t0
    t_nb, out_nb = best_of(lambda: attn_hfa_blocked(p, args.blocks, backend="numba"),
                           args.repeat)
    print(f"numba  {t_nb * 1e3:9.1f} ms  (first call {warm * 1e3:.1f} ms)")
    print(f"speedup x{t_np / t_nb:.1f}, outputs identical: {np.array_equal(out_np, out_nb)}")


if __name__ == "__main__":
    main()
