"""Quasi-equivalence norms as the momentum cutoff is doubled at fixed box size.

    python3 scripts/cutoff_sweep.py [--component 0] [--amplitude 0.2] [--sizes 21 41 81]
"""

import argparse

from fermikms.estimates import powers_stormer
from fermikms.model import LatticeModel, bump_profile


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--component", type=int, default=0)
    ap.add_argument("--amplitude", type=float, default=0.2)
    ap.add_argument("--box", type=float, default=20.0)
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--sizes", type=int, nargs="+", default=[21, 41, 81])
    args = ap.parse_args()
    models = [LatticeModel(1, n, args.box) for n in args.sizes]
    sweep = powers_stormer(
        models, lambda m: bump_profile(m, radius=4.0, amplitude=args.amplitude,
                                       component=args.component, epsilon=1.0), args.beta)
    print(f"{'n':>5} {'cutoff':>8} {'hs1':>10} {'hs2':>10} {'lundberg':>10} {'PKQ':>10}")
    for r in sweep.rows:
        print(f"{r['n_modes']:5d} {r['cutoff']:8.3f} {r['hs1']:10.6f} {r['hs2']:10.6f} "
              f"{r['lundberg']:10.6f} {r['pkq']:10.6f}")
    print("relative change over the last doubling:",
          ", ".join(f"{k} {v:.2e}" for k, v in sweep.relative_growth.items()))
    print("verdict:", sweep.verdict)


if __name__ == "__main__":
    main()
