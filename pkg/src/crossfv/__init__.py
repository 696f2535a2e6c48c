"""Finite-volume solvers for parabolic equations with small cross-diffusion."""

from .grid import Field, Grid1D, Grid2D, build_uniform_grid_1d, build_uniform_grid_2d, cell_average
from .model import ScalarModelParams, TwoSpeciesParams
from .scheme import State, StepControl, evolve, step

__all__ = [
    "Field", "Grid1D", "Grid2D", "build_uniform_grid_1d", "build_uniform_grid_2d", "cell_average",
    "ScalarModelParams", "TwoSpeciesParams", "State", "StepControl", "evolve", "step",
]
__version__ = "0.1.0"
