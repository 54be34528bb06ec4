"""Statistical channel model: long-term gains, Rayleigh fading, rates."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .quadrature import geometric_breakpoints, integrate

SPEED_OF_LIGHT = 299_792_458.0
LN2 = math.log(2.0)


def capacity_gap(ber):
    """SNR gap for uncoded QAM at a target bit error rate, natural log."""
    if not 0.0 < ber < 0.2:
        raise ValueError(f"ber must lie in (0, 0.2), got {ber}")
    return -math.log(5.0 * ber) / 1.5


@dataclass(frozen=True)
class SystemParams:
    n_subcarriers: int = 64
    n_users: int = 4
    bandwidth_per_subcarrier: float = 1.0
    tx_power_per_subcarrier: float = 1e9
    noise_psd: float = 1.0
    capacity_gap: float = field(default_factory=lambda: capacity_gap(1e-4))
    slot_length: float = 1e-3
    window_length: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        checks = {
            "n_subcarriers": self.n_subcarriers >= 1,
            "n_users": self.n_users >= 1,
            "bandwidth_per_subcarrier": self.bandwidth_per_subcarrier > 0,
            "tx_power_per_subcarrier": self.tx_power_per_subcarrier > 0,
            "noise_psd": self.noise_psd > 0,
            "capacity_gap": self.capacity_gap >= 1,
            "slot_length": self.slot_length > 0,
            "window_length": self.window_length >= self.slot_length,
        }
        for name, ok in checks.items():
            if not ok:
                raise ValueError(f"invalid {name}: {getattr(self, name)!r}")

    @property
    def slots_per_window(self):
        return max(1, round(self.window_length / self.slot_length))

    @property
    def snr_scale(self):
        """p_t / (Gamma N0): multiplies a channel gain to give effective SNR."""
        return self.tx_power_per_subcarrier / (self.capacity_gap * self.noise_psd)


@dataclass(frozen=True)
class UserProfile:
    avg_gain: float
    min_rate: float
    outage_tolerance: float
    distance: float | None = None
    shadowing: float | None = None

    def __post_init__(self):
        if not self.avg_gain > 0:
            raise ValueError(f"avg_gain must be positive, got {self.avg_gain}")
        if not self.min_rate >= 0:
            raise ValueError(f"min_rate must be nonnegative, got {self.min_rate}")
        if not 0.0 < self.outage_tolerance < 1.0:
            raise ValueError(
                f"outage_tolerance must lie in (0, 1), got {self.outage_tolerance}"
            )
        if self.outage_tolerance < 1e-6:
            warnings.warn(
                f"outage_tolerance {self.outage_tolerance:g} is tiny; the safe "
                "constraint is unlikely to be satisfiable",
                stacklevel=2,
            )


@dataclass(frozen=True)
class CellGeometry:
    radius: float = 100.0
    reference_distance: float = 1.0
    path_loss_exponent: float = 4.0
    shadowing_std_db: float = 8.0
    ref_rx_power_db: float = 90.0

    def __post_init__(self):
        if not self.radius > self.reference_distance > 0:
            raise ValueError("need radius > reference_distance > 0")
        if not self.path_loss_exponent > 0:
            raise ValueError("path_loss_exponent must be positive")
        if not self.shadowing_std_db >= 0:
            raise ValueError("shadowing_std_db must be nonnegative")

    @property
    def tx_power(self):
        """Linear transmit power giving ``ref_rx_power_db`` at the reference distance."""
        return 10.0 ** (self.ref_rx_power_db / 10.0)

    def mean_rx_power_db(self, distance, shadowing=1.0):
        gain = (distance / self.reference_distance) ** (-self.path_loss_exponent) * shadowing
        return self.ref_rx_power_db + 10.0 * math.log10(gain)


def distance_from_uniform(u, radius):
    """Inverse CDF of the radial density 2d/R^2 on (0, R]."""
    return radius * np.sqrt(u)


def draw_user_profiles(geometry, k, rng, min_rate=20.0, outage_tolerance=0.1):
    """Drop ``k`` users uniformly in the cell and freeze their long-term gains."""
    if k < 1:
        raise ValueError("need at least one user")
    u = 1.0 - rng.random(k)  # (0, 1]
    d = distance_from_uniform(u, geometry.radius)
    shadow_db = rng.normal(0.0, geometry.shadowing_std_db, size=k)
    s = 10.0 ** (shadow_db / 10.0)
    sigma = (d / geometry.reference_distance) ** (-geometry.path_loss_exponent) * s
    q = np.broadcast_to(np.asarray(min_rate, dtype=float), (k,))
    eps = np.broadcast_to(np.asarray(outage_tolerance, dtype=float), (k,))
    return [
        UserProfile(float(sigma[i]), float(q[i]), float(eps[i]), float(d[i]), float(s[i]))
        for i in range(k)
    ]


def avg_gains(users):
    return np.array([u.avg_gain for u in users])


def sample_gains(users, params, rng, n_slots=None):
    """Exponential power gains with per-user mean sigma_k.

    Shape ``(K, N)``, or ``(n_slots, K, N)`` when ``n_slots`` is given.
    """
    if not users:
        raise ValueError("users must be nonempty")
    sigma = avg_gains(users)[:, None]
    shape = (len(users), params.n_subcarriers)
    if n_slots is None:
        return rng.standard_exponential(shape) * sigma
    return rng.standard_exponential((n_slots, *shape)) * sigma


def instantaneous_rate(g, params):
    """W log2(1 + p_t g / (Gamma N0)) for gains ``g`` (scalar or array)."""
    g = np.asarray(g, dtype=float)
    return params.bandwidth_per_subcarrier * np.log1p(params.snr_scale * g) / LN2


# Fading integrals are evaluated after substituting u = xi / sigma, so the
# density becomes exp(-u); the tail beyond this is below e^-40 of the mass.
TRUNCATION = 40.0


def layer_width(c, exponent=0.0):
    """Width of the boundary layer of (1 + c u)^-a e^-u near u = 0."""
    return min(1.0, 1.0 / (c * (1.0 + exponent) + 1e-300))


def expected_rate(user, params, rel_tol=1e-10, max_panels=4000):
    """E{r} for an exponential gain with mean ``user.avg_gain``."""
    c = params.snr_scale * user.avg_gain
    bp = geometric_breakpoints(TRUNCATION, 0.1 * layer_width(c))

    def f(u):
        return (np.log1p(c * u) * np.exp(-u))[None, :]

    val, _ = integrate(f, bp, rel_tol=rel_tol, abs_tol=1e-300, max_panels=max_panels)
    return params.bandwidth_per_subcarrier / LN2 * float(val[0])


def coherence_time(carrier_freq, speed):
    if carrier_freq <= 0 or speed <= 0:
        raise ValueError("carrier_freq and speed must be positive")
    return 9.0 * SPEED_OF_LIGHT / (16.0 * math.pi * carrier_freq * speed)


@dataclass(frozen=True)
class DelayProfile:
    """Exponentially decaying tapped-delay line.

    Taps sit at ``l * tap_spacing`` for ``l < n_taps``; the decay is fitted so
    the power-weighted rms delay equals ``rms_delay``.  Subcarriers are the
    N-point DFT bins of that sampling grid.
    """

    n_taps: int = 40
    tap_spacing: float = 10e-9
    rms_delay: float = 37.79e-9

    def __post_init__(self):
        if self.n_taps < 1:
            raise ValueError("n_taps must be >= 1")
        if not self.tap_spacing > 0:
            raise ValueError("tap_spacing must be positive")
        if self.rms_delay < 0 or (self.n_taps > 1 and self.rms_delay == 0):
            raise ValueError("rms_delay must be positive for multi-tap profiles")
        if self.n_taps > 1:
            l = np.arange(self.n_taps)
            top = self.tap_spacing * l.std()  # uniform powers: largest rms reachable
            if self.rms_delay >= top:
                raise ValueError(
                    f"rms_delay {self.rms_delay:g} unreachable with {self.n_taps} taps "
                    f"at spacing {self.tap_spacing:g} (max {top:g})"
                )

    def tap_powers(self):
        """Normalized tap powers (sum to 1)."""
        if self.n_taps == 1:
            return np.ones(1)
        l = np.arange(self.n_taps, dtype=float)
        target = self.rms_delay / self.tap_spacing

        def rms(log_decay):
            p = np.exp(-np.exp(log_decay) * l)
            p /= p.sum()
            mean = p @ l
            return math.sqrt(max(p @ (l - mean) ** 2, 0.0)) - target

        log_decay = brentq(rms, -30.0, 30.0, xtol=1e-14)
        p = np.exp(-np.exp(log_decay) * l)
        return p / p.sum()

    def rms(self):
        p = self.tap_powers()
        tau = self.tap_spacing * np.arange(self.n_taps)
        mean = p @ tau
        return math.sqrt(p @ (tau - mean) ** 2)


def sample_correlated_gains(users, params, profile, rng, n_slots=None):
    """Frequency-correlated gains from a random tapped-delay channel.

    Each slot draws independent complex Gaussian taps per user with total
    power sigma_k, so every subcarrier gain is still exponential with mean
    sigma_k; only the dependence across subcarriers changes.
    """
    n = params.n_subcarriers
    if profile.n_taps > n:
        raise ValueError("n_taps cannot exceed the number of subcarriers")
    sigma = avg_gains(users)
    var = sigma[:, None] * profile.tap_powers()[None, :]  # (K, L)
    slots = 1 if n_slots is None else n_slots
    shape = (slots, len(users), profile.n_taps)
    taps = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(var / 2.0)
    gains = np.abs(np.fft.fft(taps, n=n, axis=-1)) ** 2
    return gains[0] if n_slots is None else gains
