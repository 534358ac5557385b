"""Truncation gap of the Eulerian generating series against the order N,
and the Eulerian resummation of the single-mode entropy.

    python3 scripts/eulerian_convergence.py [--x 0.3] [--u -2]
"""

import argparse
import cmath
import math

from fermikms.entropy import (eulerian_generating_check, eulerian_mode_series,
                              eulerian_series_ratio, mode_entropy)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--x", type=float, default=0.3)
    ap.add_argument("--u", type=float, default=-2.0)
    args = ap.parse_args()
    # nearest singularity of (u - 1)/(u - e^{x(u-1)}) in x
    radius = abs(cmath.log(complex(args.u)) / (args.u - 1))
    print(f"convergence radius in x: {radius:.4f} (ratio {abs(args.x) / radius:.3f})")
    print(f"{'N':>4} {'gap':>12} {'integrated gap':>15}")
    for N in (5, 10, 15, 20, 25, 30):
        g = eulerian_generating_check(args.x, args.u, N)
        print(f"{N:4d} {g.gap:12.3e} {g.gap_integrated:15.3e}")
    print()
    print(f"{'beta':>5} {'s':>5} {'k':>5} {'ratio':>7} {'series - closed':>16}")
    for beta, s, k in [(1, 0, 1), (1, 0, -1), (2, 1, 1.5), (2, 2, -1.5), (1, 3, 2)]:
        r = eulerian_series_ratio(beta, s, k)
        diff = eulerian_mode_series(beta, s, k) - mode_entropy(beta, s, k)
        print(f"{beta:5.1f} {s:5.1f} {k:5.1f} {r:7.3f} {diff:16.2e}")
    print(f"single mode beta=1, s=0, k=1: {mode_entropy(1.0, 0.0, 1.0):.10f} "
          f"(0.5 + log((1 + 1/e)/2) = {0.5 + math.log((1 + math.exp(-1)) / 2):.10f})")


if __name__ == "__main__":
    main()
