"""Bias and spread of the empirical forward/backward velocities on the stationary OU process.

Sweeps the time window and bandwidth of the kernel-regression estimator and
prints the sup error against D+ = -x, D- = +x on |x| <= 2, relative to 2.
"""

import argparse
import time

import numpy as np

from nelsonlab.fields import CartesianGrid
from nelsonlab.nelson import empirical_nelson
from nelsonlab.suites import harmonic_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--dt", type=float, default=0.02)
    args = ap.parse_args()

    ens = harmonic_ensemble(args.paths, args.seed, dt=args.dt, steps=40)
    grid = CartesianGrid.uniform(-2.0, 2.0, 81)
    x = grid.axes[0]
    print(f"{'window':>6} {'bandwidth':>9} {'degree':>6} {'D+ err':>8} {'D- err':>8} {'seconds':>8}")
    for window in (1, 2, 4):
        pool = 20 // window - 1
        for bw in (0.1, 0.2, 0.4):
            for degree in (0, 1):
                start = time.perf_counter()
                pair = empirical_nelson(ens, ens.times[20], grid, window=window, bandwidth=bw, degree=degree, pool=pool)
                fwd = np.max(np.abs(pair.forward.values[:, 0] + x)) / 2
                bwd = np.max(np.abs(pair.backward.values[:, 0] - x)) / 2
                print(f"{window:6d} {bw:9.2f} {degree:6d} {fwd:8.2%} {bwd:8.2%} {time.perf_counter() - start:8.1f}")


if __name__ == "__main__":
    main()
