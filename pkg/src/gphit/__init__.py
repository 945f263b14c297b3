"""Simulation laboratory for hitting times of Gaussian processes."""

from .kernels import Kernel, brownian, fbm, independent_increments, linear
from .simulate import Grid, Path, make_plan, sample_path
from .estimators import McConfig

__all__ = [
    "Kernel", "brownian", "fbm", "independent_increments", "linear",
    "Grid", "Path", "make_plan", "sample_path", "McConfig",
]

__version__ = "0.1.0"
