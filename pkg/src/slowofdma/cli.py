"""Command-line front end.

Exit codes: 0 success, 1 infeasible window (``feasibility``), 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import experiments as ex
from .accpm import EmptyInterior
from .config import ConfigError, check_correlation, default_config, describe_keys, load_config
from .quadrature import QuadratureError

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

CSV_HELP = """\
CSV outputs (floats with 12 significant digits):
  windows.csv      window_id, seed, feasible, iterations, feasibility_iterations,
                   terminated_by, objective (bits/s/Hz/subcarrier), slow_throughput,
                   fast_throughput (bits/s, before overhead), slow_overhead_factor,
                   fast_overhead_factor, slow_efficiency, fast_efficiency (after
                   overhead, bits/s/Hz/subcarrier), fast_infeasible_slots,
                   sigma_k, eps_k, outage_k, x_k (reduced mode)
  sweep.csv        window_id, eps, feasible, objective, outage_k
  correlation.csv  window_id, eps_nominal, eps_design, user, outage_independent,
                   outage_correlated, violates_nominal
  trace_<id>.csv   iteration, kind, objective, best_objective, potential, n_rows
Fast-baseline slots whose LP is infeasible are solved without rate rows and
counted in fast_infeasible_slots.
"""


class GridError(ValueError):
    pass


def parse_grid(text):
    """``a:b:n`` -> n evenly spaced values; otherwise a comma list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            grid = np.linspace(float(a), float(b), n)
        else:
            grid = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise GridError(f"bad grid {text!r}; expected a:b:n or a comma list") from None
    if np.any((grid <= 0) | (grid >= 1)) or np.any(np.diff(grid) <= 0):
        raise GridError(f"grid {text!r} must be strictly increasing within (0, 1)")
    return grid


def build_parser():
    p = argparse.ArgumentParser(
        prog="slowofdma",
        description="Chance-constrained slow adaptive OFDMA allocation.",
        epilog="Config keys:\n" + describe_keys() + "\n\n" + CSV_HELP
        + "\nEnvironment: CCP_OFDMA_THREADS caps the worker pool.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--windows", type=int, help="override experiment.windows")
    common.add_argument("--window", type=int, default=0, help="window id for single-window commands")
    common.add_argument("--trace", action="store_true", help="write trace_<id>.csv per window")
    common.add_argument("--quad-tol", type=float, help="override ster.quad_rel_tol")
    common.add_argument("--rho-tol", type=float, help="override ster.rho_tol")
    common.add_argument("--eps", type=float, help="override users.outage_tolerance")
    common.add_argument("--workers", type=int, help="worker processes (capped by env)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve one window and evaluate outage")
    sub.add_parser("feasibility", parents=[common], help="report whether one window is feasible")
    sub.add_parser("simulate", parents=[common], help="solve and evaluate a batch of windows")
    sub.add_parser("compare-fast", parents=[common], help="slow vs per-slot fast adaptation")
    sw = sub.add_parser("sweep-eps", parents=[common], help="objective and outage versus eps")
    sw.add_argument("--grid", help="a:b:n or comma list (default experiment.eps_grid)")
    sub.add_parser("corr-experiment", parents=[common],
                   help="outage under frequency-correlated fading")
    return p


def _overrides(args):
    o = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.windows is not None:
        o["experiment.windows"] = args.windows
    if args.quad_tol is not None:
        o["ster.quad_rel_tol"] = args.quad_tol
    if args.rho_tol is not None:
        o["ster.rho_tol"] = args.rho_tol
    if args.eps is not None:
        o["users.outage_tolerance"] = args.eps
    return o


def _batch(cfg, args, with_fast):
    exp_cfg = dataclasses.replace(cfg.experiment, with_fast=with_fast, keep_trace=args.trace)
    return ex.run_windows(range(cfg.values["experiment.windows"]), cfg.seed, cfg.params,
                          cfg.geometry, exp_cfg, cfg.eps, cfg.mode, cfg.ster, cfg.solver,
                          workers=args.workers)


def _write_traces(out, reports):
    for r in reports:
        ex.write_trace_csv(out / f"trace_{r.window_id}.csv", r.solve_report)


def _single(cfg, args, with_eval=True):
    exp_cfg = dataclasses.replace(cfg.experiment, with_fast=False, keep_trace=True)
    if not with_eval:
        exp_cfg = dataclasses.replace(exp_cfg, eval_slots=1)
    return ex.run_window(args.window, cfg.seed, cfg.params, cfg.geometry, exp_cfg, cfg.eps,
                         cfg.mode, cfg.ster, cfg.solver)


def cmd_solve(cfg, args, out):
    r = _single(cfg, args)
    ex.write_windows_csv(out / "windows.csv", [r], cfg.params)
    ex.write_trace_csv(out / f"trace_{r.window_id}.csv", r.solve_report)
    s = r.solve_report
    if not r.feasible:
        print(f"window {r.window_id}: infeasible after {s.iterations} iterations "
              f"({s.terminated_by})")
        return EXIT_INFEASIBLE
    scale = cfg.params.n_subcarriers * cfg.params.bandwidth_per_subcarrier
    print(f"window {r.window_id}: objective {s.best_objective / scale:.6g} bits/s/Hz/subcarrier "
          f"after {s.iterations} iterations ({s.terminated_by})")
    print("allocation:", " ".join(f"{v:.6g}" for v in np.ravel(r.allocation)))
    print("outage:", " ".join(f"{v:.4g}" for v in r.per_user_outage))
    return EXIT_OK


def cmd_feasibility(cfg, args, out):
    r = _single(cfg, args, with_eval=False)
    s = r.solve_report
    if r.feasible:
        print(f"window {r.window_id}: feasible, detected at iteration "
              f"{s.feasibility_iterations}")
        return EXIT_OK
    print(f"window {r.window_id}: infeasible after {s.iterations} iterations "
          f"({s.terminated_by})")
    return EXIT_INFEASIBLE


def cmd_simulate(cfg, args, out):
    reports = _batch(cfg, args, with_fast=False)
    ex.write_windows_csv(out / "windows.csv", reports, cfg.params)
    if args.trace:
        _write_traces(out, reports)
    feas = [r for r in reports if r.feasible]
    print(f"{len(feas)} of {len(reports)} windows feasible")
    if feas:
        st = ex.convergence_stats(reports)
        worst = max(float(np.max(r.per_user_outage)) for r in feas)
        print(f"iterations mean {st['mean_iterations']:.2f} max {st['max_iterations']}; "
              f"feasibility detected after {st['mean_feasibility_iterations']:.2f} on average")
        print(f"largest empirical outage {worst:.4g}")
    return EXIT_OK


def cmd_compare_fast(cfg, args, out):
    reports = _batch(cfg, args, with_fast=True)
    ex.write_windows_csv(out / "windows.csv", reports, cfg.params)
    if args.trace:
        _write_traces(out, reports)
    feas = [r for r in reports if r.feasible]
    print(f"{len(feas)} of {len(reports)} windows feasible")
    slow_f, fast_f = ex.overhead_factors(cfg.params, cfg.experiment.overhead_fraction)
    print(f"overhead factors: slow {slow_f:.6g}, fast {fast_f:.6g}")
    if feas:
        print(f"slow/fast efficiency ratio {ex.efficiency_ratio(reports):.4f} "
              f"(without overhead {ex.efficiency_ratio(reports, False):.4f})")
    bad = sum(r.fast_infeasible_slots for r in reports)
    print(f"fast-baseline slots with unmet demand: {bad} (solved without rate rows)")
    return EXIT_OK


def cmd_sweep(cfg, args, out):
    grid = parse_grid(args.grid) if args.grid else np.array(cfg.values["experiment.eps_grid"])
    n = args.windows if args.windows is not None else 1
    ids = range(args.window, args.window + n)
    sweeps = [ex.sweep_epsilon(w, cfg.seed, grid, cfg.params, cfg.geometry, cfg.experiment,
                               cfg.mode, cfg.ster, cfg.solver) for w in ids]
    ex.write_sweep_csv(out / "sweep.csv", sweeps)
    for s in sweeps:
        obj = " ".join("inf." if np.isnan(v) else f"{v:.4g}" for v in s.objective_per_eps)
        print(f"window {s.window_id}: {obj}{'' if s.monotone else '  (NOT monotone)'}")
    return EXIT_OK


def cmd_corr(cfg, args, out):
    v = cfg.values
    exp_cfg = dataclasses.replace(cfg.experiment, eval_slots=v["corr.eval_slots"])
    rep = ex.correlation_experiment(range(v["experiment.windows"]), cfg.seed, cfg.params,
                                    cfg.profile, v["corr.eps_nominal"], v["corr.eps_design"],
                                    cfg.geometry, exp_cfg, cfg.mode, cfg.ster, cfg.solver)
    ex.write_correlation_csv(out / "correlation.csv", rep)
    for ed in rep.eps_design:
        cor = rep.correlated(ed)
        if cor.size == 0:
            print(f"eps_design {ed:g}: no feasible windows")
            continue
        print(f"eps_design {ed:g}: max correlated outage {cor.max():.4g}, "
              f"{int((cor > rep.eps_nominal).sum())} user-windows above {rep.eps_nominal:g}; "
              f"max independent outage {rep.independent(ed).max():.4g}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "feasibility": cmd_feasibility,
    "simulate": cmd_simulate,
    "compare-fast": cmd_compare_fast,
    "sweep-eps": cmd_sweep,
    "corr-experiment": cmd_corr,
}


def dispatch(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        overrides = _overrides(args)
        cfg = (load_config(args.config, overrides) if args.config
               else default_config(overrides))
        if args.command == "sweep-eps" and args.grid:
            parse_grid(args.grid)
        if args.command == "corr-experiment":
            check_correlation(cfg)
    except (ConfigError, GridError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out)
    try:
        return COMMANDS[args.command](cfg, args, out)
    except (QuadratureError, ArithmeticError, EmptyInterior, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    sys.exit(dispatch())
