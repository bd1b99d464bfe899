"""Log-polynomial optimization via moment relaxations."""
from .certify import Certificate, certify_tightness, sos_concavity_check
from .conic import ConicProgram, SolverSettings, export_program, solve
from .extract import extract_atoms, flat_truncation
from .model import ConstraintClass, CountModelSpec, LogPolyProblem, build_application, load_problem
from .pipeline import solve_problem, sweep
from .polycore import Polynomial
from .relax import build_relaxation, min_order

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "ConicProgram",
    "ConstraintClass",
    "CountModelSpec",
    "LogPolyProblem",
    "Polynomial",
    "SolverSettings",
    "build_application",
    "build_relaxation",
    "certify_tightness",
    "export_program",
    "extract_atoms",
    "flat_truncation",
    "load_problem",
    "min_order",
    "solve",
    "solve_problem",
    "sos_concavity_check",
    "sweep",
]
