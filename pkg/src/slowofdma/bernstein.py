"""Bernstein safe approximation of the per-user rate chance constraint.

For user k and a row of airtime fractions x, the constraint is

    G_k(x) = inf_{rho > 0} H_k(x, rho) <= 0,
    H_k(x, rho) = q_k + rho * sum_n Lambda_k(-x_n / rho) - rho * log(eps_k),

where Lambda_k is the cumulant generating function of the per-subcarrier
rate.  G_k <= 0 certifies Pr{sum_n x_n r_n < q_k} <= eps_k.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import LN2, TRUNCATION, layer_width
from .quadrature import geometric_breakpoints, integrate

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
# Fractions below this are treated as exactly zero in the CGF.
X_FLOOR = 1e-12


@dataclass(frozen=True)
class SterConfig:
    quad_max_panels: int = 4000
    quad_rel_tol: float = 1e-8
    rho_bracket_lo: float = 1e-6
    rho_expand_factor: float = 2.0
    rho_rel_tol: float = 1e-6
    rho_max: float = 1e6

    def __post_init__(self):
        if self.quad_max_panels < 1 or self.quad_rel_tol <= 0 or self.rho_rel_tol <= 0:
            raise ValueError("quadrature and line-search tolerances must be positive")
        if not 0 < self.rho_bracket_lo < self.rho_max:
            raise ValueError("need 0 < rho_bracket_lo < rho_max")
        if not self.rho_expand_factor > 1:
            raise ValueError("rho_expand_factor must exceed 1")


@dataclass(frozen=True)
class SterEntry:
    """Constraint value G_k and the rho at which it was attained."""

    value: float
    rho: float
    at_boundary: bool = False


@dataclass
class Allocation:
    """Airtime fractions: ``(K, N)`` in full mode, ``(K,)`` in reduced mode."""

    x: np.ndarray
    mode: str = "full"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.mode not in ("full", "reduced"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "full" and self.x.ndim != 2:
            raise ValueError("full-mode allocation must be a K x N matrix")
        if self.mode == "reduced" and self.x.ndim != 1:
            raise ValueError("reduced-mode allocation must be a length-K vector")

    @property
    def n_users(self):
        return self.x.shape[0]

    def row(self, k):
        return np.atleast_1d(self.x[k])

    def is_admissible(self, tol=1e-9):
        col = self.x.sum(axis=0)
        return bool(np.all(self.x >= -tol) and np.all(col <= 1 + tol))


def _multiplicity(params, reduced):
    return params.n_subcarriers if reduced else 1


def _user_c(user, params):
    return params.snr_scale * user.avg_gain


def _mgf_integrals(a, c, cfg, with_log_moment=False):
    """∫_0^U (1 + c u)^-a e^-u du for each exponent in ``a``.

    With ``with_log_moment`` also returns ∫ log(1 + c u) (1 + c u)^-a e^-u du.
    """
    a = np.asarray(a, dtype=float)
    bp = geometric_breakpoints(TRUNCATION, 0.1 * layer_width(c, float(a.max(initial=0.0))))

    def f(u):
        lg = np.log1p(c * u)
        base = np.exp(-a[:, None] * lg[None, :] - u[None, :])
        if with_log_moment:
            return np.concatenate([base, base * lg[None, :]], axis=0)
        return base

    vals, _ = integrate(f, bp, rel_tol=cfg.quad_rel_tol, abs_tol=1e-300,
                        max_panels=cfg.quad_max_panels)
    if with_log_moment:
        return vals[: len(a)], vals[len(a):]
    return vals


def _exponent(x, rho, params):
    return params.bandwidth_per_subcarrier * np.asarray(x, dtype=float) / (rho * LN2)


def cgf_values(x, rho, user, params, cfg=SterConfig()):
    """Lambda_k(-x/rho) for an array of fractions (vectorized :func:`cgf_lambda`)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0) or rho <= 0:
        raise ValueError("need x >= 0 and rho > 0")
    out = np.zeros(x.shape)
    live = x >= X_FLOOR
    if np.any(live):
        vals, inv = np.unique(x[live], return_inverse=True)
        ints = _mgf_integrals(_exponent(vals, rho, params), _user_c(user, params), cfg)
        out[live] = np.log(ints)[inv]
    return out


def cgf_lambda(x_frac, rho, user, params, cfg=SterConfig()):
    """log E{exp(-x_frac * r / rho)} for one subcarrier; always <= 0."""
    return float(cgf_values([x_frac], rho, user, params, cfg)[0])


def H(x_row, rho, user, params, cfg=SterConfig(), reduced=False):
    """q + rho * sum Lambda(-x/rho) - rho log(eps).

    In reduced mode ``x_row`` is the single fraction shared by all N
    subcarriers and the sum collapses to N * Lambda.
    """
    return user.min_rate + _excess(x_row, rho, user, params, cfg, reduced)


def _excess(x_row, rho, user, params, cfg, reduced):
    """H - q, kept apart from q so tiny allocations do not round away."""
    lam = cgf_values(x_row, rho, user, params, cfg).sum()
    lam *= _multiplicity(params, reduced)
    return rho * lam - rho * math.log(user.outage_tolerance)


def _h_on_grid(x_row, rhos, user, params, cfg, reduced):
    """H - q at many rho values with one batched quadrature call."""
    x = np.atleast_1d(np.asarray(x_row, dtype=float))
    live = x[x >= X_FLOOR]
    vals, counts = np.unique(live, return_counts=True)
    rhos = np.asarray(rhos, dtype=float)
    a = (vals[None, :] / rhos[:, None]) * (params.bandwidth_per_subcarrier / LN2)
    ints = _mgf_integrals(a.ravel(), _user_c(user, params), cfg).reshape(a.shape)
    lam = np.log(ints) @ counts * _multiplicity(params, reduced)
    return rhos * lam - rhos * math.log(user.outage_tolerance)


def bernstein_G(x_row, user, params, cfg=SterConfig(), reduced=False):
    """Minimize H over rho by geometric bracketing then golden section.

    The returned value is H at the best rho actually evaluated, so it never
    underestimates the infimum.
    """
    x = np.atleast_1d(np.asarray(x_row, dtype=float))
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise ValueError("x_row entries must lie in [0, 1]")
    x = np.clip(x, 0.0, 1.0)
    if not np.any(x >= X_FLOOR):
        # H = q - rho log eps increases in rho: infimum q as rho -> 0+.
        return SterEntry(float(user.min_rate), cfg.rho_bracket_lo)

    # rho* scales with x (H - q is homogeneous in (x, rho)), so the lower
    # end of the bracket is rho_bracket_lo at x = 1 and shrinks with max x.
    rho_lo = cfg.rho_bracket_lo * min(1.0, float(x.max()))
    n_steps = int(math.ceil(math.log(cfg.rho_max / rho_lo)
                            / math.log(cfg.rho_expand_factor)))
    grid = rho_lo * cfg.rho_expand_factor ** np.arange(n_steps + 1)
    grid = np.minimum(grid, cfg.rho_max)
    hv = _h_on_grid(x, grid, user, params, cfg, reduced)

    # sequential expansion: stop at the first point below both neighbours
    j = 1
    if hv[1] < hv[0]:
        while j + 1 < len(grid) and hv[j + 1] < hv[j]:
            j += 1
    if hv[1] >= hv[0] or j + 1 >= len(grid):
        best = int(np.argmin(hv))
        warnings.warn(
            f"rho bracket not found in [{rho_lo:g}, {cfg.rho_max:g}]; "
            f"using boundary value at rho={grid[best]:g}",
            RuntimeWarning, stacklevel=2,
        )
        return SterEntry(float(user.min_rate + hv[best]), float(grid[best]), at_boundary=True)

    def h_log(t):
        return _excess(x, math.exp(t), user, params, cfg, reduced)

    lo, hi = math.log(grid[j - 1]), math.log(grid[j + 1])
    t1 = hi - INV_PHI * (hi - lo)
    t2 = lo + INV_PHI * (hi - lo)
    f1, f2 = h_log(t1), h_log(t2)
    best_t, best_f = math.log(grid[j]), float(hv[j])
    while hi - lo > cfg.rho_rel_tol:
        if f1 <= f2:
            hi, t2, f2 = t2, t1, f1
            t1 = hi - INV_PHI * (hi - lo)
            f1 = h_log(t1)
        else:
            lo, t1, f1 = t1, t2, f2
            t2 = lo + INV_PHI * (hi - lo)
            f2 = h_log(t2)
    for t, f in ((t1, f1), (t2, f2)):
        if f < best_f:
            best_t, best_f = t, f
    return SterEntry(float(user.min_rate + best_f), math.exp(best_t))


def grad_H_x(x_row, rho, user, params, cfg=SterConfig(), reduced=False):
    """Gradient of H with respect to the fractions at fixed rho.

    Each component is (W/ln2) * I'(a)/I(a) with I the CGF integral; in
    reduced mode it is scaled by N.  Components are strictly negative.
    """
    x = np.atleast_1d(np.asarray(x_row, dtype=float))
    if rho <= 0:
        raise ValueError("rho must be positive")
    vals, inv = np.unique(np.clip(x, 0.0, None), return_inverse=True)
    base, logm = _mgf_integrals(_exponent(vals, rho, params), _user_c(user, params),
                                cfg, with_log_moment=True)
    g = -(params.bandwidth_per_subcarrier / LN2) * (logm / base)
    return g[inv].reshape(x.shape) * _multiplicity(params, reduced)


@dataclass
class FeasibilityCheck:
    entries: list
    violated: list
    gradients: dict = field(default_factory=dict)

    @property
    def feasible(self):
        return not self.violated


def stc_feasibility(alloc, users, params, cfg=SterConfig(), tol=1e-9):
    """Evaluate every user's G and collect violated users with cut gradients.

    Gradients are returned in the flattened allocation space (row-major K x N,
    or length K in reduced mode), nonzero only on the user's own block.
    """
    reduced = alloc.mode == "reduced"
    entries, violated, grads = [], [], {}
    for k, user in enumerate(users):
        row = alloc.row(k)
        e = bernstein_G(row, user, params, cfg, reduced)
        entries.append(e)
        if e.value > tol:
            violated.append(k)
            g = np.zeros(alloc.x.shape)
            g[k] = grad_H_x(row, e.rho, user, params, cfg, reduced).reshape(g[k].shape)
            grads[k] = g.ravel()
    return FeasibilityCheck(entries, violated, grads)
