"""Normalized solutions of a two-component Schrödinger system with Sobolev-critical
self-interaction and mass-subcritical coupling, computed in the radial setting."""

from .params import DerivedConstants, ParamError, ProblemParams, derive_constants, validate
from .radial import RadialField, RadialGrid, build_grid
from .functional import StatePair, energy, pohozaev
from .minsolve import SolveResult, SolverOptions, solve_limit_ground_state, solve_local_min
from .mountain import MountainOptions, level_bound_check, solve_mountain_pass

__all__ = [
    "DerivedConstants",
    "MountainOptions",
    "ParamError",
    "ProblemParams",
    "RadialField",
    "RadialGrid",
    "SolveResult",
    "SolverOptions",
    "StatePair",
    "build_grid",
    "derive_constants",
    "energy",
    "level_bound_check",
    "pohozaev",
    "solve_limit_ground_state",
    "solve_local_min",
    "solve_mountain_pass",
    "validate",
]

__version__ = "0.1.0"
