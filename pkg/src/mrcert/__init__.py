"""Certified bounds and empirical checks for nonautonomous L^p maximal-regularity constants."""
from .core import (
    BoundReport,
    Interval,
    NormPair,
    OperatorTrajectory,
    PointwiseMRData,
    RCRange,
    Subdivision,
    TimeGrid,
)

__all__ = [
    "BoundReport",
    "Interval",
    "NormPair",
    "OperatorTrajectory",
    "PointwiseMRData",
    "RCRange",
    "Subdivision",
    "TimeGrid",
]
__version__ = "0.1.0"
