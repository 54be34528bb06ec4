"""Acceptance criteria.

Each test prints one ``[PASS]``/``[FAIL]`` line (collected again in the
terminal summary) and asserts it.  Tolerances are pinned constants below.

  1  empirical outage <= eps + 3 sqrt(eps(1-eps)/1e5) on >= 50 feasible windows, eps = 0.1
  2  grad_H_x vs central differences (h = 1e-5 relative), 50 points, rel err <= 1e-4
  3  CGF quadrature vs 1e7-sample Monte Carlo, 20 points, within 3 standard errors
  4  chord convexity of H in (x, rho) and of G in x, 50 chords each, tol 1e-8
  5  ACCPM vs simplex on 25 LPs (rel 1e-4); simplex vs vertex enumeration (abs 1e-8)
  6  analytic center: box midpoint, simplex barycenter (1e-8), 3-D grid search
  7  reduced K=4 N=64 eps=0.2 delta=1e-2, 50 feasible windows: mean its <= 50,
     max <= 80, mean feasibility detection <= 15
  8  slow/fast efficiency ratio in [0.60, 0.85]; overhead factors 0.9999 and 0.9
  9  objective nondecreasing over the eps grid; gain 0.05 -> 0.7 below 1.5
  10 correlated fading, 100 windows: some outage > 0.3 at eps_design 0.3,
     none above 0.3 at eps_design 0.1
  11 K=2 N=4 full vs reduced: objectives within 1e-3 rel, full rows constant within 1e-3
  12 identical seed and config give byte-identical CSVs

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from slowofdma import cli
from slowofdma import experiments as ex
from slowofdma.accpm import (
    LinearOracle,
    Polytope,
    SolverConfig,
    analytic_center,
    base_polytope,
    run_accpm,
    solve,
)
from slowofdma.bernstein import H, SterConfig, bernstein_G, cgf_lambda, grad_H_x
from slowofdma.channel import (
    CellGeometry,
    DelayProfile,
    SystemParams,
    UserProfile,
    draw_user_profiles,
    instantaneous_rate,
)
from slowofdma.lp import LinearProgram, simplex_solve

pytestmark = pytest.mark.slow

SEED = 20240601
DESK = SystemParams()
TIGHT = SterConfig(quad_rel_tol=1e-12)

# 1
SAFETY_EPS = 0.1
SAFETY_SLOTS = 100_000
SAFETY_MIN_WINDOWS = 50
SAFETY_TARGET_WINDOWS = 60
# 2
GRAD_POINTS = 50
GRAD_REL_STEP = 1e-5
GRAD_TOL = 1e-4
# 3
MC_POINTS = 20
MC_SAMPLES = 10**7
MC_SIGMAS = 3.0
# 4
CHORDS = 50
CONVEX_TOL = 1e-8
# 5
LP_INSTANCES = 25
ACCPM_LP_TOL = 1e-4
VERTEX_TOL = 1e-8
# 6
CENTER_TOL = 1e-8
GRID_POINTS = 81
# 7
CONV_EPS = 0.2
CONV_WINDOWS = 50
CONV_MEAN_MAX, CONV_MAX_MAX, CONV_DETECT_MAX = 50.0, 80, 15.0
# 8
RATIO_BAND = (0.60, 0.85)
# 9
SWEEP_GRID = (0.05, 0.1, 0.2, 0.3, 0.5, 0.7)
SWEEP_WINDOWS = 10
SWEEP_GAIN_MAX = 1.5
SWEEP_MONO_TOL = 1e-9
# 10
CORR_WINDOWS = 100
CORR_NOMINAL = 0.3
CORR_SLOTS = 10_000
# 11
REDUCE_TOL = 1e-3
REDUCE_INSTANCES = 6
# 12
DET_WINDOWS = 4


def verdict(log, n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title}: {detail}"
    log.append(line)
    print(line)
    assert ok, line


def collect_feasible(eps, target, cfg, chunk=10, limit=400):
    """Windows 0, 1, ... until ``target`` are feasible (deterministic order)."""
    reports, w = [], 0
    while sum(r.feasible for r in reports) < target and w < limit:
        reports += ex.run_windows(range(w, w + chunk), SEED, DESK, cfg=cfg, eps=eps)
        w += chunk
    out, n = [], 0
    for r in reports:
        out.append(r)
        n += r.feasible
        if n == target:
            break
    return out


@pytest.fixture(scope="module")
def safety_batch():
    cfg = ex.ExperimentConfig(eval_slots=SAFETY_SLOTS, with_fast=True, fast_on_infeasible=False)
    return collect_feasible(SAFETY_EPS, SAFETY_TARGET_WINDOWS, cfg)


def test_criterion_01_outage_safety(safety_batch, acceptance_log):
    feas = [r for r in safety_batch if r.feasible]
    bound = SAFETY_EPS + 3 * math.sqrt(SAFETY_EPS * (1 - SAFETY_EPS) / SAFETY_SLOTS)
    worst = max(float(r.per_user_outage.max()) for r in feas)
    ok = len(feas) >= SAFETY_MIN_WINDOWS and worst <= bound
    verdict(acceptance_log, 1, "Bernstein safety", ok,
            f"max outage {worst:.5f} <= {bound:.5f} over {len(feas)} feasible of "
            f"{len(safety_batch)} windows x {DESK.n_users} users")


def test_criterion_02_gradient(acceptance_log):
    rng = np.random.default_rng(SEED + 2)
    users = draw_user_profiles(CellGeometry(), GRAD_POINTS, rng, 20.0, 0.1)
    worst = 0.0
    for u in users:
        x = rng.uniform(0.02, 1.0, DESK.n_subcarriers)
        rho = bernstein_G(x, u, DESK, TIGHT).rho
        g = grad_H_x(x, rho, u, DESK, TIGHT)
        for n in rng.choice(DESK.n_subcarriers, 3, replace=False):
            h = GRAD_REL_STEP * x[n]
            e = np.zeros_like(x)
            e[n] = h
            fd = (H(x + e, rho, u, DESK, TIGHT) - H(x - e, rho, u, DESK, TIGHT)) / (2 * h)
            worst = max(worst, abs(g[n] - fd) / abs(fd))
    verdict(acceptance_log, 2, "gradient vs central differences", worst <= GRAD_TOL,
            f"max rel err {worst:.2e} <= {GRAD_TOL:g} at {GRAD_POINTS} (x, rho*) points")


def mc_cgf(x, rho, sigma, params, rng, n, chunk=10**6):
    """log mean exp(-x r / rho) and its delta-method standard error."""
    s1 = s2 = 0.0
    for _ in range(n // chunk):
        r = instantaneous_rate(rng.standard_exponential(chunk) * sigma, params)
        y = np.exp(-x * r / rho)
        s1 += y.sum()
        s2 += (y * y).sum()
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0)
    return math.log(mean), math.sqrt(var / n) / mean


def test_criterion_03_cgf_monte_carlo(acceptance_log):
    rng = np.random.default_rng(SEED + 3)
    worst = 0.0
    for _ in range(MC_POINTS):
        sigma = 10 ** rng.uniform(-10, -5)
        x = rng.uniform(0.05, 1.0)
        rho = 10 ** rng.uniform(-0.5, 1.5)
        u = UserProfile(sigma, 20.0, 0.1)
        quad = cgf_lambda(x, rho, u, DESK)
        est, se = mc_cgf(x, rho, sigma, DESK, rng, MC_SAMPLES)
        worst = max(worst, abs(quad - est) / se)
    verdict(acceptance_log, 3, "CGF quadrature vs Monte Carlo", worst <= MC_SIGMAS,
            f"max deviation {worst:.2f} standard errors <= {MC_SIGMAS:g} at {MC_POINTS} points")


def test_criterion_04_convexity(acceptance_log):
    rng = np.random.default_rng(SEED + 4)
    users = draw_user_profiles(CellGeometry(), CHORDS, rng, 20.0, 0.1)
    n = DESK.n_subcarriers
    worst_h = worst_g = -np.inf
    for i, u in enumerate(users):
        x1 = rng.uniform(0, 1, n)
        # every other chord is short, where curvature has least room to hide errors
        x2 = rng.uniform(0, 1, n) if i % 2 else np.clip(x1 + rng.normal(0, 0.02, n), 0, 1)
        r1, r2 = 10 ** rng.uniform(-1.5, 1.5, 2)
        lam = rng.uniform(0.1, 0.9)
        xm, rm = lam * x1 + (1 - lam) * x2, lam * r1 + (1 - lam) * r2
        hv = [H(z, r, u, DESK, TIGHT) for z, r in ((x1, r1), (x2, r2), (xm, rm))]
        worst_h = max(worst_h, hv[2] - lam * hv[0] - (1 - lam) * hv[1])
        gv = [bernstein_G(z, u, DESK, TIGHT).value for z in (x1, x2, xm)]
        worst_g = max(worst_g, gv[2] - lam * gv[0] - (1 - lam) * gv[1])
    ok = worst_h <= CONVEX_TOL and worst_g <= CONVEX_TOL
    verdict(acceptance_log, 4, "chord convexity", ok,
            f"max violation H {worst_h:.2e}, G {worst_g:.2e} <= {CONVEX_TOL:g} "
            f"over {CHORDS} chords each")


def vertex_optimum(c, a, b):
    m = len(c)
    aa = np.vstack([a, -np.eye(m)])
    bb = np.concatenate([b, np.zeros(m)])
    best = -np.inf
    for rows in itertools.combinations(range(len(bb)), m):
        sub = aa[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, bb[list(rows)])
        if np.all(aa @ x <= bb + 1e-9):
            best = max(best, float(c @ x))
    return best


def test_criterion_05_accpm_vs_lp(acceptance_log):
    rng = np.random.default_rng(SEED + 5)
    tight = SolverConfig(delta=1e-6, objective_rel_tol=1e-7)
    worst_acc = worst_vtx = 0.0
    for i in range(LP_INSTANCES):
        m = 2 + i % 9  # 2..10 variables
        k = int(rng.integers(2, 5))
        a = rng.uniform(0, 1, (k, m))
        b = rng.uniform(0.2, 0.8, k)
        c = rng.uniform(0.1, 1.0, m)
        a_full, b_full = np.vstack([a, np.ones((1, m))]), np.append(b, 1.0)
        ref = simplex_solve(LinearProgram(c, a_full, b_full)).objective_value
        worst_vtx = max(worst_vtx, abs(ref - vertex_optimum(c, a_full, b_full)))
        base = base_polytope(SystemParams(n_subcarriers=1, n_users=m), "reduced")
        rep = run_accpm(base, LinearOracle(a, b, c), tight)
        worst_acc = max(worst_acc, abs(rep.best_objective - ref) / abs(ref))
    ok = worst_acc <= ACCPM_LP_TOL and worst_vtx <= VERTEX_TOL
    verdict(acceptance_log, 5, "ACCPM vs LP oracle", ok,
            f"ACCPM rel err {worst_acc:.2e} <= {ACCPM_LP_TOL:g}; simplex vs vertices "
            f"{worst_vtx:.2e} <= {VERTEX_TOL:g} on {LP_INSTANCES} instances")


def test_criterion_06_analytic_center(acceptance_log):
    errs = []
    for m in (2, 3, 6):
        box = Polytope(np.vstack([np.eye(m), -np.eye(m)]),
                       np.concatenate([np.full(m, 2.0), np.zeros(m)]))
        errs.append(np.abs(analytic_center(box).point - 1.0).max())
        simp = Polytope(np.vstack([np.ones((1, m)), -np.eye(m)]),
                        np.concatenate([[1.0], np.zeros(m)]))
        errs.append(np.abs(analytic_center(simp).point - 1.0 / (m + 1)).max())
    exact = max(errs)
    rng = np.random.default_rng(SEED + 6)
    g = np.linspace(0, 1, GRID_POINTS)[1:-1]
    pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    res = g[1] - g[0]
    grid_ok = True
    worst_dist = 0.0
    for _ in range(5):
        extra = rng.normal(size=(3, 3))
        a = np.vstack([np.eye(3), -np.eye(3), extra])
        b = np.concatenate([np.ones(3), np.zeros(3), extra @ np.full(3, 0.5)
                            + 0.3 * np.abs(extra).sum(axis=1)])
        c = analytic_center(Polytope(a, b))
        s = b[None, :] - pts @ a.T
        inside = np.all(s > 0, axis=1)
        pot = np.where(inside, np.log(np.where(inside[:, None], s, 1.0)).sum(axis=1), -np.inf)
        best = pts[np.argmax(pot)]
        d = float(np.linalg.norm(c.point - best))
        worst_dist = max(worst_dist, d)
        grid_ok &= c.potential >= pot.max() - 1e-12 and d <= math.sqrt(3) * res
    ok = exact <= CENTER_TOL and grid_ok
    verdict(acceptance_log, 6, "analytic center exactness", ok,
            f"box/simplex err {exact:.1e} <= {CENTER_TOL:g}; grid distance "
            f"{worst_dist:.4f} <= {math.sqrt(3) * res:.4f}")


@pytest.fixture(scope="module")
def convergence_batch():
    cfg = ex.ExperimentConfig(eval_slots=1, with_fast=False)
    return collect_feasible(CONV_EPS, CONV_WINDOWS, cfg)


def test_criterion_07_convergence(convergence_batch, acceptance_log):
    st = ex.convergence_stats(convergence_batch)
    ok = (st["windows"] >= CONV_WINDOWS and st["mean_iterations"] <= CONV_MEAN_MAX
          and st["max_iterations"] <= CONV_MAX_MAX
          and st["mean_feasibility_iterations"] <= CONV_DETECT_MAX)
    verdict(acceptance_log, 7, "convergence envelope", ok,
            f"{st['windows']} windows: mean {st['mean_iterations']:.1f} <= {CONV_MEAN_MAX:g}, "
            f"max {st['max_iterations']} <= {CONV_MAX_MAX}, feasibility detection "
            f"{st['mean_feasibility_iterations']:.2f} <= {CONV_DETECT_MAX:g}")


def test_criterion_08_efficiency(safety_batch, acceptance_log):
    ratio = ex.efficiency_ratio(safety_batch)
    slow_f, fast_f = ex.overhead_factors(DESK, 0.1)
    ok = RATIO_BAND[0] <= ratio <= RATIO_BAND[1] and slow_f == 0.9999 and fast_f == 0.9
    n = sum(r.feasible for r in safety_batch)
    verdict(acceptance_log, 8, "spectral-efficiency ratio", ok,
            f"ratio {ratio:.4f} in [{RATIO_BAND[0]}, {RATIO_BAND[1]}] over {n} windows; "
            f"overhead slow {slow_f!r}, fast {fast_f!r}")


def test_criterion_09_eps_sweep(acceptance_log):
    cfg = ex.ExperimentConfig(eval_slots=10_000)
    mono, gains, safe = True, [], True
    for w in range(SWEEP_WINDOWS):
        sw = ex.sweep_epsilon(w, SEED, SWEEP_GRID, DESK, cfg=cfg, mono_tol=SWEEP_MONO_TOL)
        mono &= sw.monotone
        obj = sw.objective_per_eps
        if not np.isnan(obj[0]):
            gains.append(obj[-1] - obj[0])
        for e, out in zip(SWEEP_GRID, sw.outage_per_eps):
            if not np.isnan(out).any():
                safe &= bool(np.all(out <= e + 3 * math.sqrt(e * (1 - e) / 10_000)))
    ok = mono and len(gains) > 0 and max(gains) < SWEEP_GAIN_MAX
    top = max(gains) if gains else float("nan")
    verdict(acceptance_log, 9, "eps-sweep monotonicity", ok,
            f"monotone on {SWEEP_WINDOWS} windows: {mono}; max gain {top:.3f} < "
            f"{SWEEP_GAIN_MAX:g} ({len(gains)} windows feasible at 0.05); outages safe: {safe}")


def test_criterion_10_correlation(acceptance_log):
    rep = ex.correlation_experiment(range(CORR_WINDOWS), SEED, DESK, DelayProfile(),
                                    CORR_NOMINAL, (0.3, 0.1),
                                    cfg=ex.ExperimentConfig(eval_slots=CORR_SLOTS))
    hi, lo = rep.correlated(0.3), rep.correlated(0.1)
    ok = hi.size > 0 and lo.size > 0 and hi.max() > CORR_NOMINAL and lo.max() <= CORR_NOMINAL
    verdict(acceptance_log, 10, "frequency-correlation stress", ok,
            f"eps_design 0.3: max {hi.max():.3f} > {CORR_NOMINAL} "
            f"({int((hi > CORR_NOMINAL).sum())} user-windows); eps_design 0.1: max "
            f"{lo.max():.3f} <= {CORR_NOMINAL} ({lo.size // DESK.n_users} feasible windows)")


def test_criterion_11_reduction(acceptance_log):
    p = SystemParams(n_subcarriers=4, n_users=2)
    tight = SolverConfig(delta=1e-4, objective_rel_tol=1e-7)
    worst_obj = worst_row = 0.0
    done, seed = 0, 0
    while done < REDUCE_INSTANCES:
        users = draw_user_profiles(CellGeometry(), 2, np.random.default_rng(SEED + 1100 + seed),
                                   4.0, 0.2)
        seed += 1
        red = solve(users, p, mode="reduced", solver_cfg=tight)
        if not red.feasible:
            continue
        full = solve(users, p, mode="full", solver_cfg=tight)
        x = full.best_point.reshape(2, 4)
        worst_obj = max(worst_obj, abs(full.best_objective / red.best_objective - 1))
        worst_row = max(worst_row, float(np.ptp(x, axis=1).max()))
        done += 1
    ok = worst_obj <= REDUCE_TOL and worst_row <= REDUCE_TOL
    verdict(acceptance_log, 11, "reduced-problem equivalence", ok,
            f"objective rel diff {worst_obj:.2e}, row spread {worst_row:.2e} <= {REDUCE_TOL:g} "
            f"on {REDUCE_INSTANCES} instances")


def test_criterion_12_determinism(tmp_path, acceptance_log):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 7\nsys.n_users = 4\nsys.n_subcarriers = 64\n"
                   "experiment.eval_slots = 2000\nsys.window_s = 0.05\ncorr.eval_slots = 500\n")
    runs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        base = ["--config", str(cfg), "--out", str(out), "--windows", str(DET_WINDOWS)]
        codes = [cli.dispatch(["compare-fast", "--trace"] + base),
                 cli.dispatch(["sweep-eps", "--grid", "0.1:0.5:3"] + base[:4]),
                 cli.dispatch(["corr-experiment"] + base)]
        assert codes == [0, 0, 0]
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    a, b = runs
    ok = a.keys() == b.keys() and all(a[k] == b[k] for k in a) and len(a) >= 4
    verdict(acceptance_log, 12, "determinism", ok,
            f"{len(a)} files byte-identical across two runs: {sorted(a)}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
