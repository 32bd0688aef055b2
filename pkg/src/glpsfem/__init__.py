"""Vertex-patch local projection stabilized P1/P1 finite elements.

Equal-order continuous piecewise-linear discretizations of the Darcy and
Stokes problems on the unit square, stabilized by fluctuations over
overlapping vertex patches, with a manufactured-solution convergence
harness and a command-line front end (``glps-fem``).
"""
from .assembly import (
    ManufacturedProblem,
    SaddleSystem,
    assemble,
    assemble_darcy,
    assemble_stokes,
    darcy_reference_problem,
    linear_pressure_problem,
    stokes_reference_problem,
)
from .fe_space import P1Space, interpolate, quadrature_for
from .mesh import TriMesh, build_initial_mesh, uniform_refine
from .solver import SingularSystemError, inf_sup_estimate, solve
from .stabilization import StabilizationParams, assemble_S_sb, assemble_S_si
from .verification import ErrorReport, compute_errors, convergence_study, order_of

__version__ = "0.1.0"

__all__ = [
    "ManufacturedProblem", "SaddleSystem", "assemble", "assemble_darcy", "assemble_stokes",
    "darcy_reference_problem", "linear_pressure_problem", "stokes_reference_problem",
    "P1Space", "interpolate", "quadrature_for",
    "TriMesh", "build_initial_mesh", "uniform_refine",
    "SingularSystemError", "inf_sup_estimate", "solve",
    "StabilizationParams", "assemble_S_sb", "assemble_S_si",
    "ErrorReport", "compute_errors", "convergence_study", "order_of",
]
