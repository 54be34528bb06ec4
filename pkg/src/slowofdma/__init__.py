"""Chance-constrained slow adaptive OFDMA subcarrier allocation."""

from .accpm import SolverConfig, SolveReport, solve
from .bernstein import Allocation, SterConfig, bernstein_G, stc_feasibility
from .channel import (
    CellGeometry,
    DelayProfile,
    SystemParams,
    UserProfile,
    capacity_gap,
    draw_user_profiles,
    expected_rate,
)

__all__ = [
    "Allocation",
    "CellGeometry",
    "DelayProfile",
    "SolveReport",
    "SolverConfig",
    "SterConfig",
    "SystemParams",
    "UserProfile",
    "bernstein_G",
    "capacity_gap",
    "draw_user_profiles",
    "expected_rate",
    "solve",
    "stc_feasibility",
]

__version__ = "0.1.0"
