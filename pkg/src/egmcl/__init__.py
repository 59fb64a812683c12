"""Bound-preserving and entropy-stable enriched Galerkin schemes for 2D scalar conservation laws."""

from .limiters import SchemeMode
from .mesh import build_mesh
from .problems import PROBLEM_NAMES, get_problem
from .semidiscrete import EGState, assemble
from .timestepping import TimeLoopConfig, heun_step, initial_state, run_transient

__all__ = [
    "EGState",
    "PROBLEM_NAMES",
    "SchemeMode",
    "TimeLoopConfig",
    "assemble",
    "build_mesh",
    "get_problem",
    "heun_step",
    "initial_state",
    "run_transient",
]

__version__ = "0.1.0"
