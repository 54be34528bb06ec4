"""Regenerate every CSV of the desk-scale study into one output tree.

    python3 scripts/run_experiments.py --out results [--windows 100] [--quick]

Subdirectories: compare/ (windows.csv, traces), convergence/ (eps = 0.2),
sweep/ (sweep.csv over ten windows) and corr/ (correlation.csv).
"""

import argparse
import sys
import time
from pathlib import Path

from slowofdma.cli import dispatch

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--config", type=Path, default=HERE / "default.cfg")
    ap.add_argument("--windows", type=int, default=100)
    ap.add_argument("--quick", action="store_true", help="10 windows, short evaluation")
    args = ap.parse_args()
    n = 10 if args.quick else args.windows
    base = ["--config", str(args.config)]
    quick = ["--windows", str(n)]
    jobs = [
        ("compare", ["compare-fast", "--trace"] + quick),
        ("convergence", ["simulate", "--eps", "0.2", "--trace"] + quick),
        ("sweep", ["sweep-eps", "--windows", str(min(n, 10))]),
        ("corr", ["corr-experiment"] + quick),
    ]
    status = 0
    for name, argv in jobs:
        t = time.time()
        print(f"== {name}: {' '.join(argv)}", flush=True)
        code = dispatch(argv + base + ["--out", str(args.out / name)])
        print(f"   exit {code} in {time.time() - t:.1f} s", flush=True)
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
