"""Monte Carlo harness: adaptation windows, fast baseline, sweeps, correlation.

Every window owns an independent RNG tree rooted at ``window_seed(master,
window_id)``, so results do not depend on worker count or window order.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .accpm import SolverConfig, solve
from .bernstein import SterConfig
from .channel import (
    CellGeometry,
    DelayProfile,
    SystemParams,
    draw_user_profiles,
    instantaneous_rate,
    sample_correlated_gains,
    sample_gains,
)
from .lp import solve_fast_slot

log = logging.getLogger(__name__)

THREADS_ENV = "CCP_OFDMA_THREADS"
FLOAT_FMT = "%.12g"
_MASK64 = (1 << 64) - 1


def splitmix64(state):
    """One splitmix64 output for a 64-bit state (returns the mixed value)."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def window_seed(master_seed, window_id):
    """Seed for window ``window_id``; independent of how many windows run."""
    return splitmix64((splitmix64(master_seed & _MASK64) + window_id) & _MASK64)


def window_streams(seed):
    profile, window, evaluation = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(profile), np.random.default_rng(window),
            np.random.default_rng(evaluation))


@dataclass(frozen=True)
class ExperimentConfig:
    min_rate: float = 20.0
    eval_slots: int = 100_000
    eval_chunk: int = 10_000
    overhead_fraction: float = 0.1
    with_fast: bool = True
    fast_on_infeasible: bool = True
    keep_trace: bool = False

    def __post_init__(self):
        if self.min_rate < 0:
            raise ValueError("min_rate must be nonnegative")
        if self.eval_slots < 1 or self.eval_chunk < 1:
            raise ValueError("eval_slots and eval_chunk must be positive")
        if not 0 <= self.overhead_fraction < 1:
            raise ValueError("overhead_fraction must lie in [0, 1)")


def overhead_factors(params, fraction=0.1):
    """(slow, fast) airtime left after signalling.

    Each allocation update costs ``fraction * T0`` of airtime: once per
    window for slow adaptation, once per slot for fast adaptation.
    """
    t0, t = params.slot_length, params.window_length
    return (t - fraction * t0) / t, 1.0 - fraction


@dataclass
class WindowReport:
    window_id: int
    seed: int
    user_profiles: list
    solve_report: object
    per_user_outage: np.ndarray
    slow_throughput: float  # bits/s before overhead, averaged over window slots
    fast_throughput: float
    slow_overhead_factor: float
    fast_overhead_factor: float
    feasible: bool
    fast_infeasible_slots: int = 0
    allocation: np.ndarray | None = None

    @property
    def slow_effective(self):
        return self.slow_throughput * self.slow_overhead_factor

    @property
    def fast_effective(self):
        return self.fast_throughput * self.fast_overhead_factor


def _user_fractions(x, params, mode):
    """(K, N) fraction matrix from a reduced or flattened full solution."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    if mode == "reduced":
        return np.repeat(x[:, None], params.n_subcarriers, axis=1)
    return x.reshape(params.n_users, params.n_subcarriers)


def slot_rates(gains, frac, params):
    """Per-user aggregate rates, shape ``gains.shape[:-1]``."""
    return (instantaneous_rate(gains, params) * frac).sum(axis=-1)


def estimate_outage(users, frac, params, rng, n_slots, chunk=10_000, sampler=None):
    """Empirical Pr{sum_n x r < q_k} per user over ``n_slots`` fresh slots."""
    q = np.array([u.min_rate for u in users])
    hits = np.zeros(len(users), dtype=np.int64)
    done = 0
    while done < n_slots:
        m = min(chunk, n_slots - done)
        if sampler is None:
            g = sample_gains(users, params, rng, n_slots=m)
        else:
            g = sampler(rng, m)
        hits += (slot_rates(g, frac, params) < q).sum(axis=0)
        done += m
    return hits / n_slots


def fast_baseline(gains, users, params):
    """Mean per-slot LP throughput over ``gains`` (S, K, N); also infeasible count."""
    total, bad = 0.0, 0
    for g in gains:
        res = solve_fast_slot(g, users, params)
        total += res.throughput
        bad += not res.feasible
    return total / len(gains), bad


def run_window(window_id, master_seed, params, geometry=CellGeometry(), cfg=ExperimentConfig(),
               eps=0.1, mode="reduced", ster=SterConfig(), solver=SolverConfig()):
    seed = window_seed(master_seed, window_id)
    prof_rng, win_rng, eval_rng = window_streams(seed)
    users = draw_user_profiles(geometry, params.n_users, prof_rng, cfg.min_rate, eps)
    rep = solve(users, params, ster, mode, solver_cfg=solver)
    if not cfg.keep_trace:
        rep.trace = []
    slow_f, fast_f = overhead_factors(params, cfg.overhead_fraction)
    gains = sample_gains(users, params, win_rng, n_slots=params.slots_per_window)

    fast, bad = 0.0, 0
    if cfg.with_fast and (rep.feasible or cfg.fast_on_infeasible):
        fast, bad = fast_baseline(gains, users, params)

    if not rep.feasible:
        return WindowReport(window_id, seed, users, rep, np.full(len(users), np.nan), 0.0,
                            fast, slow_f, fast_f, False, bad)
    frac = _user_fractions(rep.best_point, params, mode)
    slow = float(slot_rates(gains, frac, params).sum(axis=-1).mean())
    outage = estimate_outage(users, frac, params, eval_rng, cfg.eval_slots, cfg.eval_chunk)
    return WindowReport(window_id, seed, users, rep, outage, slow, fast, slow_f, fast_f,
                        True, bad, np.asarray(rep.best_point, dtype=float))


def pool_size(requested=None):
    """Worker count: ``requested`` capped by CCP_OFDMA_THREADS and CPU count."""
    n = os.cpu_count() or 1
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if requested is not None:
        n = min(n, max(1, int(requested)))
    return n


def _run_one(args):
    window_id, kwargs = args
    return run_window(window_id, **kwargs)


def run_windows(window_ids, master_seed, params, geometry=CellGeometry(),
                cfg=ExperimentConfig(), eps=0.1, mode="reduced", ster=SterConfig(),
                solver=SolverConfig(), workers=None):
    """Run windows on a process pool; the result is ordered by window id."""
    kwargs = dict(master_seed=master_seed, params=params, geometry=geometry, cfg=cfg,
                  eps=eps, mode=mode, ster=ster, solver=solver)
    jobs = [(int(w), kwargs) for w in sorted(window_ids)]
    n = pool_size(workers)
    if n <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(_run_one, jobs))


def efficiency_ratio(reports, with_overhead=True):
    """Mean over feasible windows of slow/fast throughput."""
    ok = [r for r in reports if r.feasible and r.fast_throughput > 0]
    if not ok:
        raise ValueError("need at least one feasible report with a fast baseline")
    if with_overhead:
        vals = [r.slow_effective / r.fast_effective for r in ok]
    else:
        vals = [r.slow_throughput / r.fast_throughput for r in ok]
    return float(np.mean(vals))


def convergence_stats(reports):
    """Iteration statistics over feasible windows (all windows if none)."""
    if not reports:
        raise ValueError("need at least one report")
    feas = [r for r in reports if r.feasible] or list(reports)
    its = np.array([r.solve_report.iterations for r in feas])
    det = [r.solve_report.feasibility_iterations for r in feas
           if r.solve_report.feasibility_iterations is not None]
    return {
        "windows": len(feas),
        "mean_iterations": float(its.mean()),
        "max_iterations": int(its.max()),
        "mean_feasibility_iterations": float(np.mean(det)) if det else float("nan"),
    }


@dataclass
class SweepReport:
    window_id: int
    epsilon_grid: np.ndarray
    objective_per_eps: np.ndarray  # bits/s/Hz/subcarrier, nan when infeasible
    outage_per_eps: np.ndarray  # (len(grid), K)
    feasible_count_per_eps: np.ndarray
    monotone: bool = True


def sweep_epsilon(window_id, master_seed, grid, params, geometry=CellGeometry(),
                  cfg=ExperimentConfig(), mode="reduced", ster=SterConfig(),
                  solver=SolverConfig(), mono_tol=1e-9):
    """Re-solve one fixed window at each tolerance in ``grid``.

    The user drop and the evaluation stream are shared across the grid, so
    differences come from the tolerance alone.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-D sequence")
    if np.any((grid <= 0) | (grid >= 1)) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing within (0, 1)")
    seed = window_seed(master_seed, window_id)
    prof_rng, _, _ = window_streams(seed)
    base = draw_user_profiles(geometry, params.n_users, prof_rng, cfg.min_rate, 0.5)
    scale = params.n_subcarriers * params.bandwidth_per_subcarrier
    obj = np.full(grid.size, np.nan)
    outage = np.full((grid.size, len(base)), np.nan)
    for i, e in enumerate(grid):
        users = [dataclasses.replace(u, outage_tolerance=float(e)) for u in base]
        rep = solve(users, params, ster, mode, solver_cfg=solver)
        if not rep.feasible:
            continue
        obj[i] = rep.best_objective / scale
        frac = _user_fractions(rep.best_point, params, mode)
        eval_rng = window_streams(seed)[2]
        outage[i] = estimate_outage(users, frac, params, eval_rng, cfg.eval_slots,
                                    cfg.eval_chunk)
    feas = ~np.isnan(obj)
    vals = obj[feas]
    monotone = bool(np.all(np.diff(vals) >= -mono_tol * np.maximum(1.0, np.abs(vals[1:]))))
    if not monotone:
        log.warning("window %d: objective not monotone in epsilon: %s", window_id, obj)
    return SweepReport(window_id, grid, obj, outage, np.cumsum(feas), monotone)


@dataclass
class CorrelationRow:
    window_id: int
    eps_design: float
    user: int
    outage_independent: float
    outage_correlated: float


@dataclass
class CorrelationReport:
    eps_nominal: float
    eps_design: tuple
    rows: list = field(default_factory=list)
    infeasible: dict = field(default_factory=dict)

    def correlated(self, eps_design):
        return np.array([r.outage_correlated for r in self.rows if r.eps_design == eps_design])

    def independent(self, eps_design):
        return np.array([r.outage_independent for r in self.rows if r.eps_design == eps_design])


def correlation_experiment(window_ids, master_seed, params, profile=DelayProfile(),
                           eps_nominal=0.3, eps_design=(0.3, 0.1), geometry=CellGeometry(),
                           cfg=ExperimentConfig(eval_slots=10_000), mode="reduced",
                           ster=SterConfig(), solver=SolverConfig()):
    """Solve with the independent-subcarrier constraint, evaluate under correlation.

    For each window and design tolerance, outage is measured against the
    demand both with independent gains and with tapped-delay-line gains.
    The same gain streams are reused across design tolerances.
    """
    rep = CorrelationReport(eps_nominal, tuple(eps_design))
    for w in sorted(window_ids):
        seed = window_seed(master_seed, w)
        prof_rng, _, _ = window_streams(seed)
        base = draw_user_profiles(geometry, params.n_users, prof_rng, cfg.min_rate, 0.5)
        for ed in eps_design:
            users = [dataclasses.replace(u, outage_tolerance=float(ed)) for u in base]
            sol = solve(users, params, ster, mode, solver_cfg=solver)
            if not sol.feasible:
                rep.infeasible[ed] = rep.infeasible.get(ed, 0) + 1
                continue
            frac = _user_fractions(sol.best_point, params, mode)
            _, win_rng, eval_rng = window_streams(seed)
            ind = estimate_outage(users, frac, params, eval_rng, cfg.eval_slots, cfg.eval_chunk)

            def sampler(rng, m, users=users):
                return sample_correlated_gains(users, params, profile, rng, n_slots=m)

            cor = estimate_outage(users, frac, params, win_rng, cfg.eval_slots,
                                  cfg.eval_chunk, sampler)
            for k in range(len(users)):
                rep.rows.append(CorrelationRow(w, float(ed), k, float(ind[k]), float(cor[k])))
    return rep


# CSV writers ----------------------------------------------------------------

WINDOW_COLUMNS = (
    ["window_id", "seed", "feasible", "iterations", "feasibility_iterations",
     "terminated_by", "objective", "slow_throughput", "fast_throughput",
     "slow_overhead_factor", "fast_overhead_factor", "slow_efficiency",
     "fast_efficiency", "fast_infeasible_slots"]
)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return "" if v is None else str(v)


def _write(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_windows_csv(path, reports, params):
    """windows.csv: one row per window; efficiencies in bits/s/Hz/subcarrier,
    overhead included.  Per-user columns: sigma_k, eps_k, outage_k, x_k."""
    k = params.n_users
    scale = params.n_subcarriers * params.bandwidth_per_subcarrier
    header = (WINDOW_COLUMNS + [f"sigma_{i}" for i in range(k)] + [f"eps_{i}" for i in range(k)]
              + [f"outage_{i}" for i in range(k)])
    reduced = all(r.allocation is None or r.allocation.ndim == 1 and len(r.allocation) == k
                  for r in reports)
    if reduced:
        header += [f"x_{i}" for i in range(k)]
    rows = []
    for r in reports:
        s = r.solve_report
        row = [r.window_id, r.seed, r.feasible, s.iterations, s.feasibility_iterations,
               s.terminated_by, s.best_objective / scale if r.feasible else float("nan"),
               r.slow_throughput, r.fast_throughput, r.slow_overhead_factor,
               r.fast_overhead_factor, r.slow_effective / scale, r.fast_effective / scale,
               r.fast_infeasible_slots]
        row += [u.avg_gain for u in r.user_profiles] + [u.outage_tolerance for u in r.user_profiles]
        row += list(r.per_user_outage)
        if reduced:
            row += list(r.allocation) if r.allocation is not None else [float("nan")] * k
        rows.append(row)
    return _write(path, header, rows)


def write_sweep_csv(path, sweeps):
    """sweep.csv: window_id, eps, feasible, objective, outage_<k>."""
    k = max(s.outage_per_eps.shape[1] for s in sweeps)
    header = ["window_id", "eps", "feasible", "objective"] + [f"outage_{i}" for i in range(k)]
    rows = []
    for s in sweeps:
        for i, e in enumerate(s.epsilon_grid):
            rows.append([s.window_id, float(e), not np.isnan(s.objective_per_eps[i]),
                         float(s.objective_per_eps[i])] + list(s.outage_per_eps[i]))
    return _write(path, header, rows)


def write_correlation_csv(path, report):
    header = ["window_id", "eps_nominal", "eps_design", "user", "outage_independent",
              "outage_correlated", "violates_nominal"]
    rows = [[r.window_id, report.eps_nominal, r.eps_design, r.user, r.outage_independent,
             r.outage_correlated, r.outage_correlated > report.eps_nominal]
            for r in report.rows]
    return _write(path, header, rows)


def write_trace_csv(path, solve_report):
    header = ["iteration", "kind", "objective", "best_objective", "potential", "n_rows"]
    rows = [[t.iteration, t.kind, t.objective, t.best_objective, t.potential, t.n_rows]
            for t in solve_report.trace]
    return _write(path, header, rows)
