"""Analytic-center cutting-plane method for the safe allocation problem.

The localization polytope ``{x : A x <= b}`` starts as the allocation
simplex.  Each iteration queries a separation oracle at the polytope's
analytic center and adds unit-norm cuts through that point: feasibility
cuts from the gradients of violated Bernstein constraints, or an
optimality cut along the throughput gradient.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bernstein import Allocation, SterConfig, stc_feasibility
from .channel import expected_rate
from .lp import LinearProgram, simplex_solve

log = logging.getLogger(__name__)

FEASIBILITY = "feasibility"
OPTIMALITY = "optimality"


class EmptyInterior(RuntimeError):
    """The localization polytope has no strictly interior point left."""


@dataclass
class Polytope:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.a.shape[0] != len(self.b):
            raise ValueError("row count mismatch between A and b")

    @property
    def m(self):
        return self.a.shape[1]

    @property
    def n_rows(self):
        return self.a.shape[0]

    def slacks(self, x):
        return self.b - self.a @ x

    def normalized(self):
        norms = np.linalg.norm(self.a, axis=1)
        return Polytope(self.a / norms[:, None], self.b / norms)


def base_polytope(params, mode="reduced"):
    """Allocation simplex with every row scaled to unit norm."""
    k, n = params.n_users, params.n_subcarriers
    if mode == "reduced":
        a = np.vstack([np.ones((1, k)), -np.eye(k)])
        b = np.concatenate([[1.0], np.zeros(k)])
    elif mode == "full":
        # x is flattened row-major over (user, subcarrier)
        a = np.vstack([np.tile(np.eye(n), (1, k)), -np.eye(n * k)])
        b = np.concatenate([np.ones(n), np.zeros(n * k)])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Polytope(a, b).normalized()


@dataclass
class CenterState:
    point: np.ndarray
    slacks: np.ndarray
    potential: float
    newton_decrement: float
    newton_steps: int = 0


def chebyshev_center(poly):
    """Center and radius of the largest inscribed ball (radius capped at 1)."""
    m = poly.m
    norms = np.linalg.norm(poly.a, axis=1)
    # x = p - q with p, q >= 0; last variable is the radius
    a = np.hstack([poly.a, -poly.a, norms[:, None]])
    cap = np.zeros((1, 2 * m + 1))
    cap[0, -1] = 1.0
    c = np.zeros(2 * m + 1)
    c[-1] = 1.0
    sol = simplex_solve(LinearProgram(c, np.vstack([a, cap]), np.append(poly.b, 1.0)))
    if not sol.optimal:
        return None, 0.0
    return sol.x[:m] - sol.x[m:2 * m], float(sol.x[-1])


def _potential(s):
    return float(np.sum(np.log(s)))


def analytic_center(poly, start=None, tol=1e-8, max_steps=200):
    """Maximize sum(log(b - A x)) by damped Newton steps from ``start``.

    If ``start`` is missing or not strictly interior, the Chebyshev center is
    used instead; a vanishing inscribed ball raises :class:`EmptyInterior`.
    """
    a, b = poly.a, poly.b
    x = None if start is None else np.asarray(start, dtype=float).copy()
    if x is None or np.any(poly.slacks(x) <= 0):
        x, radius = chebyshev_center(poly)
        if x is None or radius <= 1e-12:
            raise EmptyInterior(f"no strictly interior point (radius {radius:.3g})")
    s = b - a @ x
    lam = np.inf
    steps = 0
    for steps in range(1, max_steps + 1):
        w = 1.0 / s
        grad = a.T @ w  # gradient of -potential
        hess = (a * (w * w)[:, None]).T @ a
        try:
            dx = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise EmptyInterior("singular Hessian: polytope unbounded or degenerate") from exc
        lam = math.sqrt(max(float(-grad @ dx), 0.0))
        if lam < tol:
            break
        t = 1.0
        ad = a @ dx
        while np.any(s - t * ad <= 0):
            t *= 0.5
        phi = -_potential(s)
        while -_potential(s - t * ad) > phi - 0.25 * t * lam * lam and t > 1e-12:
            t *= 0.5
        x = x + t * dx
        s = b - a @ x
    return CenterState(x, s, _potential(s), lam, steps)


def step_off_cuts(center, normals):
    """Move off freshly added cuts through ``center.point``.

    Steps along the negated sum of the new normals by half the smallest old
    slack; returns ``None`` when that does not clear every new cut.
    """
    d = -np.sum(normals, axis=0)
    norm = np.linalg.norm(d)
    if norm == 0:
        return None
    d /= norm
    if np.any(normals @ d >= 0):
        return None
    return center.point + 0.5 * center.slacks.min() * d


@dataclass
class CutResponse:
    kind: str
    normals: np.ndarray
    offsets: np.ndarray
    violated_users: tuple = ()
    objective: float | None = None
    constraint_values: tuple = ()


def _unit_cuts(gradients, x):
    g = np.atleast_2d(np.asarray(gradients, dtype=float))
    normals = g / np.linalg.norm(g, axis=1)[:, None]
    return normals, normals @ x


class ChanceConstraintOracle:
    """Separation oracle for the Bernstein-constrained allocation problem."""

    def __init__(self, users, params, cfg=SterConfig(), mode="reduced", feasibility_tol=1e-9):
        self.users = users
        self.params = params
        self.cfg = cfg
        self.mode = mode
        self.feasibility_tol = feasibility_tol
        rates = np.array([expected_rate(u, params) for u in users])
        n = params.n_subcarriers
        if mode == "reduced":
            self.objective_vector = n * rates
        else:
            self.objective_vector = np.repeat(rates, n)
        self.calls = 0

    def allocation(self, x):
        if self.mode == "reduced":
            return Allocation(np.clip(x, 0.0, 1.0), "reduced")
        k, n = len(self.users), self.params.n_subcarriers
        return Allocation(np.clip(x, 0.0, 1.0).reshape(k, n), "full")

    def __call__(self, x):
        self.calls += 1
        chk = stc_feasibility(self.allocation(x), self.users, self.params, self.cfg,
                              tol=self.feasibility_tol)
        values = tuple(e.value for e in chk.entries)
        if chk.violated:
            normals, offsets = _unit_cuts([chk.gradients[k] for k in chk.violated], x)
            return CutResponse(FEASIBILITY, normals, offsets, tuple(chk.violated),
                               constraint_values=values)
        normals, offsets = _unit_cuts(-self.objective_vector, x)
        return CutResponse(OPTIMALITY, normals, offsets, (),
                           float(self.objective_vector @ x), values)


class LinearOracle:
    """Oracle for ``max c^T x s.t. a x <= b`` inside the base polytope."""

    def __init__(self, a, b, objective, tol=1e-12):
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        self.b = np.asarray(b, dtype=float)
        self.objective_vector = np.asarray(objective, dtype=float)
        self.tol = tol

    def __call__(self, x):
        viol = self.a @ x - self.b
        bad = np.flatnonzero(viol > self.tol)
        values = tuple(viol)
        if bad.size:
            normals, offsets = _unit_cuts(self.a[bad], x)
            return CutResponse(FEASIBILITY, normals, offsets, tuple(bad),
                               constraint_values=values)
        normals, offsets = _unit_cuts(-self.objective_vector, x)
        return CutResponse(OPTIMALITY, normals, offsets, (),
                           float(self.objective_vector @ x), values)


def add_cut(poly, cut):
    """Append the cut rows; one row per violated user, or one optimality row."""
    return Polytope(np.vstack([poly.a, cut.normals]), np.concatenate([poly.b, cut.offsets]))


@dataclass(frozen=True)
class SolverConfig:
    delta: float = 1e-2
    stall_window: int = 10
    objective_rel_tol: float = 1e-3
    iteration_factor: float = 50.0
    newton_tol: float = 1e-8
    feasibility_tol: float = 1e-9
    max_rows_factor: int = 200
    infeasible_radius: float | None = None  # defaults to delta / 2

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.stall_window < 1 or self.objective_rel_tol <= 0:
            raise ValueError("stall_window and objective_rel_tol must be positive")

    def iteration_cap(self, m):
        return max(10, int(self.iteration_factor * m * math.log(1.0 / min(self.delta, 0.5)) ** 2))

    @property
    def radius_floor(self):
        return self.delta / 2 if self.infeasible_radius is None else self.infeasible_radius


@dataclass
class TraceRow:
    iteration: int
    kind: str
    objective: float
    best_objective: float
    potential: float
    n_rows: int


@dataclass
class SolveReport:
    best_point: np.ndarray | None
    best_objective: float
    iterations: int
    feasibility_iterations: int | None
    terminated_by: str
    cut_history: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    constraint_values: tuple = ()
    mode: str = "reduced"

    @property
    def feasible(self):
        return self.best_point is not None

    def allocation(self, params):
        if self.best_point is None:
            return None
        if self.mode == "reduced":
            return Allocation(np.clip(self.best_point, 0.0, 1.0), "reduced")
        return Allocation(np.clip(self.best_point, 0.0, 1.0)
                          .reshape(params.n_users, params.n_subcarriers), "full")


def run_accpm(base, oracle, cfg=SolverConfig(), mode="reduced"):
    """Cutting-plane loop; see :class:`SolverConfig` for stopping rules.

    Stops when (a) the best objective moved by less than ``objective_rel_tol``
    over the last ``stall_window`` feasible queries and consecutive centers
    are closer than ``delta``, (b) the iteration cap is hit, or (c) no
    feasible point was found and the polytope no longer holds a ball of
    radius ``radius_floor`` (declared infeasible).
    """
    poly = base
    m = base.m
    cap = cfg.iteration_cap(m)
    center = analytic_center(poly, tol=cfg.newton_tol)
    prev_point = None
    best_x, best_obj, best_vals = None, -np.inf, ()
    first_feasible = None
    history = []  # best objective after each feasible query
    kinds, trace = [], []
    terminated = "iteration_cap"
    it = 0
    for it in range(1, cap + 1):
        x = center.point
        cut = oracle(x)
        kinds.append(cut.kind)
        if cut.kind == OPTIMALITY:
            if first_feasible is None:
                first_feasible = it
            if cut.objective > best_obj:
                best_x, best_obj, best_vals = x.copy(), cut.objective, cut.constraint_values
            history.append(best_obj)
        trace.append(TraceRow(it, cut.kind, np.nan if cut.objective is None else cut.objective,
                              best_obj if best_x is not None else np.nan,
                              center.potential, poly.n_rows))
        step = np.inf if prev_point is None else float(np.linalg.norm(x - prev_point))
        if len(history) > cfg.stall_window and step < cfg.delta:
            gain = history[-1] - history[-1 - cfg.stall_window]
            if gain <= cfg.objective_rel_tol * abs(history[-1]):
                terminated = "converged"
                break
        poly = add_cut(poly, cut)
        if poly.n_rows > cfg.max_rows_factor * m:
            log.warning("row cap %d exceeded at iteration %d", cfg.max_rows_factor * m, it)
            terminated = "row_cap"
            break
        if best_x is None:
            _, radius = chebyshev_center(poly)
            if radius < cfg.radius_floor:
                terminated = "empty_interior"
                break
        prev_point = x
        try:
            center = analytic_center(poly, step_off_cuts(center, cut.normals), tol=cfg.newton_tol)
        except EmptyInterior:
            terminated = "empty_interior"
            break
    return SolveReport(best_x, float(best_obj), it, first_feasible, terminated,
                       kinds, trace, best_vals, mode)


def solve(users, params, cfg=SterConfig(), mode="reduced", delta=1e-2, solver_cfg=None):
    """Maximize expected throughput subject to the Bernstein constraints."""
    if solver_cfg is None:
        solver_cfg = SolverConfig(delta=delta)
    oracle = ChanceConstraintOracle(users, params, cfg, mode, solver_cfg.feasibility_tol)
    return run_accpm(base_polytope(params, mode), oracle, solver_cfg, mode)
