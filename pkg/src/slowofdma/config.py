"""Flat ``key = value`` run configuration with dotted namespaces.

Lines are ``key = value``; ``#`` starts a comment.  Powers are given in dB
and converted to linear values at load time.  Unknown keys, malformed
values and out-of-range values raise :class:`ConfigError` naming the key
(and the line when read from a file).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .accpm import SolverConfig
from .bernstein import SterConfig
from .channel import CellGeometry, DelayProfile, SystemParams, capacity_gap
from .experiments import ExperimentConfig

REQUIRED = ("seed", "sys.n_users", "sys.n_subcarriers")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return tuple(float(v) for v in s.replace(",", " ").split())


def _mode(s):
    s = s.strip()
    if s not in ("reduced", "full"):
        raise ValueError("must be 'reduced' or 'full'")
    return s


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _prob(v):
    return 0 < v < 1


def _probs(v):
    return len(v) > 0 and all(0 < e < 1 for e in v)


# key -> (parser, default, check, description)
SCHEMA = {
    "seed": (int, 0, _nonneg, "master seed; per-window seeds derive from it"),
    "cell.radius_m": (float, 100.0, _pos, "cell radius R"),
    "cell.ref_distance_m": (float, 1.0, _pos, "reference distance d0"),
    "cell.path_loss_exp": (float, 4.0, _pos, "path-loss exponent"),
    "cell.shadow_std_db": (float, 8.0, _nonneg, "log-normal shadowing std (dB)"),
    "cell.ref_power_db": (float, 90.0, math.isfinite, "received power at d0 (dB); sets p_t"),
    "sys.n_users": (int, 4, lambda v: v >= 1, "K"),
    "sys.n_subcarriers": (int, 64, lambda v: v >= 1, "N"),
    "sys.bandwidth_hz": (float, 1.0, _pos, "W per subcarrier"),
    "sys.noise_psd": (float, 1.0, _pos, "N0 (linear)"),
    "sys.ber_target": (float, 1e-4, lambda v: 0 < v < 0.2, "target BER for the capacity gap"),
    "sys.slot_ms": (float, 1.0, _pos, "slot length T0 (ms)"),
    "sys.window_s": (float, 1.0, _pos, "window length T (s)"),
    "users.min_rate": (float, 20.0, _nonneg, "per-user demand q_k (bits/s)"),
    "users.outage_tolerance": (float, 0.1, _prob, "per-user outage tolerance eps_k"),
    "solver.mode": (_mode, "reduced", None, "reduced (length K) or full (K x N) problem"),
    "solver.delta": (float, 1e-2, _pos, "centre-step tolerance delta"),
    "solver.stall_window": (int, 10, lambda v: v >= 1, "feasible queries in the stall test"),
    "solver.objective_rel_tol": (float, 1e-3, _pos, "relative objective stall tolerance"),
    "solver.iteration_factor": (float, 50.0, _pos, "C in the cap C m log^2(1/delta)"),
    "solver.newton_tol": (float, 1e-8, _pos, "Newton decrement tolerance"),
    "solver.feasibility_tol": (float, 1e-9, _nonneg, "G_k values above this count as violated"),
    "ster.quad_rel_tol": (float, 1e-8, _pos, "relative quadrature tolerance"),
    "ster.quad_max_panels": (int, 4000, lambda v: v >= 1, "quadrature panel budget"),
    "ster.rho_lo": (float, 1e-6, _pos, "first rho of the bracket search"),
    "ster.rho_max": (float, 1e6, _pos, "largest rho tried"),
    "ster.rho_factor": (float, 2.0, lambda v: v > 1, "geometric bracket ratio"),
    "ster.rho_tol": (float, 1e-6, _pos, "golden-section width in log rho"),
    "experiment.windows": (int, 100, lambda v: v >= 1, "number of windows"),
    "experiment.eval_slots": (int, 100_000, lambda v: v >= 1, "slots for outage estimation"),
    "experiment.overhead_fraction": (float, 0.1, lambda v: 0 <= v < 1,
                                     "signalling cost per update, fraction of T0"),
    "experiment.fast_on_infeasible": (_bool, True, None,
                                      "run the fast baseline on infeasible windows"),
    "experiment.eps_grid": (_floats, (0.05, 0.1, 0.2, 0.3, 0.5, 0.7), _probs,
                            "tolerance grid for sweep-eps"),
    "corr.n_taps": (int, 40, lambda v: v >= 1, "taps of the delay line"),
    "corr.tap_spacing_ns": (float, 10.0, _pos, "tap spacing (ns)"),
    "corr.rms_delay_ns": (float, 37.79, _nonneg, "target rms delay spread (ns)"),
    "corr.eps_nominal": (float, 0.3, _prob, "tolerance outages are judged against"),
    "corr.eps_design": (_floats, (0.3, 0.1), _probs, "tolerances used when solving"),
    "corr.eval_slots": (int, 10_000, lambda v: v >= 1, "slots per outage estimate"),
}


def _render(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict
    params: SystemParams
    geometry: CellGeometry
    ster: SterConfig
    solver: SolverConfig
    experiment: ExperimentConfig
    profile: DelayProfile
    source: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.values["seed"]

    @property
    def eps(self):
        return self.values["users.outage_tolerance"]

    @property
    def mode(self):
        return self.values["solver.mode"]

    def resolved_text(self):
        lines = ["# effective configuration; loadable with --config"]
        lines += [f"{k} = {_render(self.values[k])}" for k in sorted(self.values)]
        lines.append(f"# derived: capacity_gap = {self.params.capacity_gap!r}")
        lines.append(f"# derived: tx_power_per_subcarrier = {self.params.tx_power_per_subcarrier!r}")
        return "\n".join(lines) + "\n"

    def write_resolved(self, out_dir):
        path = Path(out_dir) / "config.resolved"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.resolved_text())
        return path


def parse_text(text, source="<string>"):
    """Raw ``{key: (value_string, line_no)}`` from config text."""
    raw = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}: expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{no}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{no}: duplicate key {key!r}")
        raw[key] = (val, no)
    return raw


def build(raw, overrides=None, source="<string>", require=True):
    """Validate raw strings plus typed ``overrides`` into a :class:`RunConfig`."""
    overrides = dict(overrides or {})
    for key in overrides:
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
    if require:
        missing = [k for k in REQUIRED if k not in raw and k not in overrides]
        if missing:
            raise ConfigError(f"{source}: missing required key(s): {', '.join(missing)}")
    values = {}
    for key, (parse, default, check, _) in SCHEMA.items():
        where = source
        if key in overrides:
            value = overrides[key]
        elif key in raw:
            text, no = raw[key]
            where = f"{source}:{no}"
            try:
                value = parse(text)
            except ValueError as exc:
                raise ConfigError(f"{where}: bad value for {key}: {exc}") from None
        else:
            value = default
        if check is not None and not check(value):
            raise ConfigError(f"{where}: value {value!r} out of range for {key}")
        values[key] = value
    return _assemble(values, source)


def _assemble(v, source):
    try:
        geometry = CellGeometry(v["cell.radius_m"], v["cell.ref_distance_m"],
                                v["cell.path_loss_exp"], v["cell.shadow_std_db"],
                                v["cell.ref_power_db"])
    except ValueError as exc:
        raise ConfigError(f"cell.*: {exc}") from None
    try:
        params = SystemParams(
            n_subcarriers=v["sys.n_subcarriers"], n_users=v["sys.n_users"],
            bandwidth_per_subcarrier=v["sys.bandwidth_hz"],
            tx_power_per_subcarrier=geometry.tx_power, noise_psd=v["sys.noise_psd"],
            capacity_gap=capacity_gap(v["sys.ber_target"]),
            slot_length=v["sys.slot_ms"] * 1e-3, window_length=v["sys.window_s"],
            rng_seed=v["seed"])
    except ValueError as exc:
        raise ConfigError(f"sys.*: {exc}") from None
    try:
        ster = SterConfig(v["ster.quad_max_panels"], v["ster.quad_rel_tol"], v["ster.rho_lo"],
                          v["ster.rho_factor"], v["ster.rho_tol"], v["ster.rho_max"])
    except ValueError as exc:
        raise ConfigError(f"ster.*: {exc}") from None
    try:
        solver = SolverConfig(delta=v["solver.delta"], stall_window=v["solver.stall_window"],
                              objective_rel_tol=v["solver.objective_rel_tol"],
                              iteration_factor=v["solver.iteration_factor"],
                              newton_tol=v["solver.newton_tol"],
                              feasibility_tol=v["solver.feasibility_tol"])
    except ValueError as exc:
        raise ConfigError(f"solver.*: {exc}") from None
    experiment = ExperimentConfig(min_rate=v["users.min_rate"],
                                  eval_slots=v["experiment.eval_slots"],
                                  overhead_fraction=v["experiment.overhead_fraction"],
                                  fast_on_infeasible=v["experiment.fast_on_infeasible"])
    try:
        profile = DelayProfile(v["corr.n_taps"], v["corr.tap_spacing_ns"] * 1e-9,
                               v["corr.rms_delay_ns"] * 1e-9)
    except ValueError as exc:
        raise ConfigError(f"corr.*: {exc}") from None
    if list(v["experiment.eps_grid"]) != sorted(set(v["experiment.eps_grid"])):
        raise ConfigError("experiment.eps_grid: must be strictly increasing")
    return RunConfig(v, params, geometry, ster, solver, experiment, profile, source)


def check_correlation(cfg):
    """Extra constraints that only the correlation experiment needs."""
    if cfg.profile.n_taps > cfg.params.n_subcarriers:
        raise ConfigError("corr.n_taps: cannot exceed sys.n_subcarriers")


def load_config(path, overrides=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return build(parse_text(text, str(path)), overrides, str(path))


def default_config(overrides=None):
    """Desk-scale defaults (K = 4, N = 64), no file needed."""
    return build({}, overrides, "<defaults>", require=False)


def describe_keys():
    rows = []
    for key, (_, default, _, desc) in SCHEMA.items():
        rows.append(f"  {key:30s} {desc} (default {_render(default)})")
    return "\n".join(rows)
