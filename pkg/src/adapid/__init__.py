"""Harmonic path-integral diffusion sampling with designable stiffness schedules."""

from adapid.schedule import (
    GreensCoeffs,
    Schedule,
    ScheduleError,
    TimeDomainError,
    WellPosednessError,
    coeffs,
    coeffs_grid,
    guard_negative_window,
)

__version__ = "0.1.0"

__all__ = [
    "Schedule",
    "GreensCoeffs",
    "ScheduleError",
    "TimeDomainError",
    "WellPosednessError",
    "coeffs",
    "coeffs_grid",
    "guard_negative_window",
    "__version__",
]
