"""Compare the numba and numpy implementations of the hot kernels.

Run ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each row reports
the best-of-N wall time for both backends, their ratio, and the max absolute
difference between their outputs. The numba timings exclude compilation
(one warm-up call per kernel).
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from roughheat import _kernels as kn


def _cases(rng: np.random.Generator):
    n = 4096
    lower = -rng.uniform(0.5, 1.0, n - 1)
    upper = -rng.uniform(0.5, 1.0, n - 1)
    diag = 2.5 + rng.uniform(0.0, 1.0, n)
    rhs = rng.standard_normal((n, 64))
    yield "tridiag_solve n=4096 m=64", "tridiag_solve", (lower, diag, upper, rhs)

    field = rng.standard_normal((64, 256, 256))
    yield "window_sum 64x256x256 w=9 ax=1", "window_sum", (field, 9, 1)
    yield "window_max 64x256x256 w=9 ax=2", "window_max", (field, 9, 2)
    yield "window_min 64x256x256 w=9 ax=0", "window_min", (field, 9, 0)

    m = 2_000_000
    ue, ul = rng.uniform(0.1, 1.0, m), rng.uniform(0.1, 1.0, m)
    d2 = rng.uniform(0.0, 1.0, m)
    ts = rng.uniform(0.1, 0.5, m)
    yield "harnack_exponent_max 2e6 pairs", "harnack_exponent_max", (ue, ul, d2, ts + 0.5, ts, 0.0)


def _diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':36s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s} {'max |diff|':>11s}")
    for label, name, a in _cases(rng):
        f_np = getattr(kn, f"{name}_numpy")
        f_nb = getattr(kn, f"{name}_numba")
        out_nb = f_nb(*a)  # warm-up compiles
        out_np = f_np(*a)
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:36s} {t_np:11.2f} {t_nb:11.2f} {t_np / t_nb:8.2f} {_diff(out_np, out_nb):11.2e}")


if __name__ == "__main__":
    main()
