"""Time the compiled trajectory kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 4] [--p 60] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from ltv_pc import _kernels_py

try:
    from ltv_pc import _kernels
except ImportError:  # extension not built
    _kernels = None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--p", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    n, m, p = args.n, args.m, args.p
    A = rng.standard_normal((p, n, n)) / np.sqrt(n)
    B = rng.standard_normal((p, n, m))
    w = rng.standard_normal((p, n))
    u = rng.standard_normal((p, m))
    x0 = rng.standard_normal(n)
    x = _kernels_py.rollout(A, B, w, x0, u)
    calls = {
        "transfer_blocks": lambda k: k.transfer_blocks(A),
        "rollout": lambda k: k.rollout(A, B, w, x0, u),
        "dynamics_residual": lambda k: k.dynamics_residual(A, B, w, x, u),
    }
    print(f"n={n} m={m} p={p}, best of {args.repeat} (ms)")
    print(f"{'kernel':<20}{'python':>10}{'cython':>10}")
    for name, fn in calls.items():
        row = [min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3]
        if _kernels is not None:
            row.append(min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3)
        print(f"{name:<20}" + "".join(f"{v:>10.3f}" for v in row))


if __name__ == "__main__":
    main()
