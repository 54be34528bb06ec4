"""Dense two-phase primal simplex and the per-slot fast-adaptation LP."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import instantaneous_rate

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "failed"


@dataclass
class LinearProgram:
    """maximize c^T x  s.t.  a_ub x <= b_ub,  x >= lower_bounds."""

    objective: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lower_bounds: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        m = len(self.objective)
        if m < 1:
            raise ValueError("need at least one variable")
        self.a_ub = np.asarray(self.a_ub, dtype=float).reshape(-1, m)
        self.b_ub = np.asarray(self.b_ub, dtype=float).ravel()
        if self.a_ub.shape[0] != len(self.b_ub):
            raise ValueError("a_ub and b_ub row counts differ")
        if self.lower_bounds is None:
            self.lower_bounds = np.zeros(m)
        self.lower_bounds = np.asarray(self.lower_bounds, dtype=float).ravel()
        for name in ("objective", "a_ub", "b_ub", "lower_bounds"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def n_vars(self):
        return len(self.objective)


@dataclass
class LpSolution:
    status: str
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_value: float = float("nan")
    duals: np.ndarray | None = None
    pivots: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL


def _pivot(t, r, j):
    t[r] /= t[r, j]
    col = t[:, j]
    rows = np.flatnonzero(col)
    rows = rows[rows != r]
    # tableau columns are sparse for the per-slot LP; touch only affected rows
    t[rows] -= col[rows, None] * t[r]


class _Tableau:
    """Row-major tableau; last row holds reduced costs, last column the rhs."""

    def __init__(self, t, basis, tol, max_pivots):
        self.t = t
        self.basis = basis
        self.tol = tol
        self.max_pivots = max_pivots
        self.pivots = 0

    def run(self, n_cols):
        """Maximize over the first ``n_cols`` columns. Returns a status string."""
        t = self.t
        bland = False
        degenerate_streak = 0
        while True:
            d = t[-1, :n_cols]
            if bland:
                cand = np.flatnonzero(d > self.tol)
                if cand.size == 0:
                    return OPTIMAL
                j = int(cand[0])
            else:
                j = int(np.argmax(d))
                if d[j] <= self.tol:
                    return OPTIMAL
            col = t[:-1, j]
            idx = np.flatnonzero(col > self.tol)
            if idx.size == 0:
                return UNBOUNDED
            ratios = t[idx, -1] / col[idx]
            best = ratios.min()
            ties = idx[ratios <= best + 1e-12 * max(1.0, abs(best))]
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(col[ties])])
            degenerate_streak = degenerate_streak + 1 if best <= 1e-12 else 0
            # Bland's rule only while stuck on a degenerate vertex
            bland = degenerate_streak > 10
            _pivot(t, r, j)
            self.basis[r] = j
            self.pivots += 1
            if self.pivots > self.max_pivots:
                return FAILED


def simplex_solve(lp, tol=1e-9, max_pivots=None):
    """Two-phase dense primal simplex.

    Dantzig pricing, switching to Bland's rule after a run of degenerate
    pivots so cycling cannot occur.
    """
    c = lp.objective
    a = lp.a_ub
    m, n = a.shape
    b = lp.b_ub - a @ lp.lower_bounds
    if max_pivots is None:
        max_pivots = 50 * (m + n) + 1000
    if m == 0:
        if np.any(c > tol):
            return LpSolution(UNBOUNDED)
        x = lp.lower_bounds.copy()
        return LpSolution(OPTIMAL, x, float(c @ x), np.zeros(0))

    sign = np.where(b < 0, -1.0, 1.0)
    flipped = np.flatnonzero(sign < 0)
    na = len(flipped)
    n_std = n + m
    t = np.zeros((m + 1, n_std + na + 1))
    t[:m, :n] = a * sign[:, None]
    t[np.arange(m), n + np.arange(m)] = sign
    t[flipped, n_std + np.arange(na)] = 1.0
    t[:m, -1] = b * sign
    basis = n + np.arange(m)
    basis[flipped] = n_std + np.arange(na)

    scale = max(1.0, float(np.abs(b).max()))
    if na:
        # phase 1: maximize -sum(artificials)
        t[-1, :] = t[flipped].sum(axis=0)
        t[-1, n_std:n_std + na] = 0.0
        tab = _Tableau(t, basis, tol, max_pivots)
        status = tab.run(n_std + na)
        if status == FAILED:
            return LpSolution(FAILED, pivots=tab.pivots)
        art_rows = np.flatnonzero(basis >= n_std)
        if np.any(t[art_rows, -1] > 1e-9 * scale) or t[-1, -1] > 1e-9 * scale:
            return LpSolution(INFEASIBLE, pivots=tab.pivots)
        keep = np.ones(m + 1, dtype=bool)
        for r in art_rows:
            nz = np.flatnonzero(np.abs(t[r, :n_std]) > 1e-9)
            if nz.size:
                _pivot(t, r, int(nz[0]))
                basis[r] = nz[0]
            else:
                keep[r] = False  # redundant row
        t = np.delete(t, np.s_[n_std:n_std + na], axis=1)[keep]
        basis = basis[keep[:-1]]
        pivots = tab.pivots
    else:
        t = np.delete(t, np.s_[n_std:n_std + na], axis=1)
        pivots = 0

    # phase 2 reduced costs: c_j - c_B^T B^-1 A_j
    cost = np.zeros(n_std + 1)
    cost[:n] = c
    t[-1, :] = cost - cost[basis] @ t[:-1, :]
    t[-1, -1] = -(cost[basis] @ t[:-1, -1])
    tab = _Tableau(t, basis, tol, max_pivots)
    status = tab.run(n_std)
    pivots += tab.pivots
    if status != OPTIMAL:
        return LpSolution(status, pivots=pivots)

    y = np.zeros(n_std)
    y[basis] = t[:-1, -1]
    x = lp.lower_bounds + y[:n]
    duals = _duals(a, sign, c, basis, n, m)
    return LpSolution(OPTIMAL, x, float(c @ x), duals, pivots)


def _duals(a, sign, c, basis, n, m):
    cols = np.hstack([a * sign[:, None], np.diag(sign)])[:, basis]
    cost = np.concatenate([c, np.zeros(m)])[basis]
    if cols.shape[0] != cols.shape[1]:
        pi = np.linalg.lstsq(cols.T, cost, rcond=None)[0]
        pi = np.concatenate([pi, np.zeros(m - len(pi))]) if len(pi) < m else pi
    else:
        pi = np.linalg.solve(cols.T, cost)
    return pi * sign


def certificate_residuals(lp, sol):
    """(primal infeasibility, duality gap, complementary-slackness residual)."""
    slack = lp.b_ub - lp.a_ub @ sol.x
    primal = max(0.0, float(-slack.min(initial=0.0)),
                 float((lp.lower_bounds - sol.x).max(initial=0.0)))
    lam = sol.duals
    mu = lp.a_ub.T @ lam - lp.objective  # bound multipliers
    dual_obj = lam @ lp.b_ub - mu @ lp.lower_bounds
    gap = abs(sol.objective_value - dual_obj)
    cs = max(float(np.abs(lam * slack).max(initial=0.0)),
             float(np.abs(mu * (sol.x - lp.lower_bounds)).max(initial=0.0)))
    return primal, gap, cs


def build_fast_lp(gains, users, params, with_rate_rows=True):
    """Per-slot throughput LP; variables are x[k, n] flattened row-major."""
    gains = np.asarray(gains, dtype=float)
    k, n = gains.shape
    r = instantaneous_rate(gains, params)
    rows, rhs = [], []
    if with_rate_rows:
        rate_rows = np.zeros((k, k * n))
        for i in range(k):
            rate_rows[i, i * n:(i + 1) * n] = -r[i]
        rows.append(rate_rows)
        rhs.append(-np.array([u.min_rate for u in users]))
    rows.append(np.tile(np.eye(n), (1, k)))
    rhs.append(np.ones(n))
    return LinearProgram(r.ravel(), np.vstack(rows), np.concatenate(rhs))


@dataclass
class FastSlot:
    throughput: float
    user_rates: np.ndarray
    feasible: bool


def solve_fast_slot(gains, users, params):
    """Fast adaptation for one slot.

    Infeasible slots fall back to the throughput-only LP; the caller sees
    ``feasible=False`` and per-user rates below demand count as outage.
    """
    k, n = np.shape(gains)
    sol = simplex_solve(build_fast_lp(gains, users, params))
    feasible = sol.optimal
    if sol.status == INFEASIBLE:
        sol = simplex_solve(build_fast_lp(gains, users, params, with_rate_rows=False))
    if not sol.optimal:
        raise ArithmeticError(f"fast-slot LP ended with status {sol.status}")
    r = instantaneous_rate(gains, params)
    x = sol.x.reshape(k, n)
    return FastSlot(sol.objective_value, (x * r).sum(axis=1), feasible)
