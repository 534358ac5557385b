"""Run every scenario in configs/ through the CLI and summarize the verdicts.

    python3 scripts/run_all.py [--out out]
"""

import argparse
import glob
import json
import os
import time

from fermikms.cli import run_config

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out")
    args = ap.parse_args()
    paths = sorted(glob.glob(os.path.join(HERE, os.pardir, "configs", "*.json")))
    summary = []
    for path in paths:
        name = os.path.splitext(os.path.basename(path))[0]
        out = os.path.join(args.out, name)
        t0 = time.perf_counter()
        code = run_config(path, out=out)
        dt = time.perf_counter() - t0
        status = "ERROR"
        rp = os.path.join(out, "report.json")
        if code in (0, 1) and os.path.exists(rp):
            with open(rp) as fh:
                status = json.load(fh)["status"]
        summary.append((name, code, status, dt))
    print()
    for name, code, status, dt in summary:
        print(f"{name:<24} exit {code}  {status:<5} {dt:7.1f} s")


if __name__ == "__main__":
    main()
