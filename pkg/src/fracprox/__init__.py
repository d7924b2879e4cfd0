"""Solvers for nonsmooth nonconvex fractional programs min f(x)/g(x) over a
closed convex set, plus an internal ADMM QP engine and reproducible benchmark
experiments.
"""

from .model import (
    Denominator,
    DenominatorBounds,
    FractionalProgram,
    MaxOfSmooth,
    SmoothPart,
    SolverConfig,
    load_program,
    theta,
    validate_config,
)
from .qp import QpProblem, QpSettings, QpSolution, QpSolver, solve_qp
from .solver import RunResult, run
from .enhanced import run_enhanced

__all__ = [
    "Denominator",
    "DenominatorBounds",
    "FractionalProgram",
    "MaxOfSmooth",
    "SmoothPart",
    "SolverConfig",
    "QpProblem",
    "QpSettings",
    "QpSolution",
    "QpSolver",
    "RunResult",
    "load_program",
    "run",
    "run_enhanced",
    "solve_qp",
    "theta",
    "validate_config",
]
