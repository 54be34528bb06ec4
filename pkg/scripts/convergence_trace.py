"""Print the cutting-plane trace of one window (objective and potential per iteration).

    python3 scripts/convergence_trace.py [--window 0] [--eps 0.2] [--mode reduced]
"""

import argparse

import numpy as np

from slowofdma import experiments as ex
from slowofdma.accpm import solve
from slowofdma.channel import CellGeometry, SystemParams, draw_user_profiles


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--window", type=int, default=0)
    ap.add_argument("--eps", type=float, default=0.2)
    ap.add_argument("--mode", choices=("reduced", "full"), default="reduced")
    ap.add_argument("--users", type=int, default=4)
    ap.add_argument("--subcarriers", type=int, default=64)
    args = ap.parse_args()

    params = SystemParams(n_subcarriers=args.subcarriers, n_users=args.users)
    prof_rng, _, _ = ex.window_streams(ex.window_seed(args.seed, args.window))
    users = draw_user_profiles(CellGeometry(), params.n_users, prof_rng, 20.0, args.eps)
    rep = solve(users, params, mode=args.mode)
    scale = params.n_subcarriers * params.bandwidth_per_subcarrier
    print(f"{'it':>3} {'cut':<11} {'objective':>10} {'best':>10} {'potential':>11} rows")
    for t in rep.trace:
        obj = "" if np.isnan(t.objective) else f"{t.objective / scale:10.5f}"
        best = "" if np.isnan(t.best_objective) else f"{t.best_objective / scale:10.5f}"
        print(f"{t.iteration:3d} {t.kind:<11} {obj:>10} {best:>10} {t.potential:11.4f} {t.n_rows}")
    print(f"terminated: {rep.terminated_by} after {rep.iterations} iterations")


if __name__ == "__main__":
    main()
