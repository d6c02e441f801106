"""Viscoelastic wave equation with fading memory: simulation and potential-well constants."""

from .model import (
    HistoryProfile,
    RelaxationKernel,
    SourceSpec,
    SpatialGrid,
    make_kernel,
)
from .sim import Problem, SolverConfig, StopReason, run

__all__ = [
    "HistoryProfile",
    "Problem",
    "RelaxationKernel",
    "SolverConfig",
    "SourceSpec",
    "SpatialGrid",
    "StopReason",
    "make_kernel",
    "run",
]
__version__ = "0.1.0"
