import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from slowofdma.channel import CellGeometry, SystemParams, UserProfile

settings.register_profile(
    "repo", max_examples=30, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def small_params():
    return SystemParams(n_subcarriers=4, n_users=2)


@pytest.fixture
def geometry():
    return CellGeometry()


@pytest.fixture
def typical_user():
    # c = p_t sigma / Gamma ~ 20 dB effective SNR
    return UserProfile(avg_gain=5e-7, min_rate=20.0, outage_tolerance=0.1)


@pytest.fixture(autouse=True)
def _quiet_bracket_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="rho bracket not found")
        yield


def rng(seed=0):
    return np.random.default_rng(seed)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
