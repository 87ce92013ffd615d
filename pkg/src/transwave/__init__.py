"""transwave: a transient wave laboratory for grid models.

Simulates electromechanical (swing-equation) and electromagnetic
(traveling-wave) transients on configurable networks, measures propagation
speeds against closed-form theory, and locates disturbance origins from
wave arrival times.
"""

__version__ = "0.1.0"

from .model import (Bus, DisturbanceKind, DisturbanceSpec, Line, NetworkModel,
                    SystemBases, build_mesh, build_ring, validate)
from .swing import SwingConfig, SwingState, electrical_power, run_swing, swing_step
from .timeseries import TimeSeriesSet

__all__ = [
    "Bus", "DisturbanceKind", "DisturbanceSpec", "Line", "NetworkModel",
    "SystemBases", "build_mesh", "build_ring", "validate",
    "SwingConfig", "SwingState", "electrical_power", "run_swing", "swing_step",
    "TimeSeriesSet", "__version__",
]
