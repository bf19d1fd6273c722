"""Adaptive plane-wave discontinuous Galerkin solver for the 2D Helmholtz equation."""
from .assembly import DGSystem, FluxParams, ProblemData, assemble, flux_params_on_edge
from .basis import PlaneWaveSpace, directions, eval_basis, linear_reproduction_coeffs
from .driver import ConvergenceRow, RunConfig, export_run, load_config, parse_config, run_adaptive
from .estimator import IndicatorReport, doerfler_mark, eta_dg, eta_weighted
from .exact import (Bessel, PlaneWave, Transmission, bessel_j, boundary_data, eval_exact,
                    relative_l2_error)
from .mesh import Domain, EdgeTag, Mesh, make_initial_mesh, mesh_stats, refine_leb
from .quadrature import edge_integral_exp, triangle_rule
from .solver import Solution, SolveReport, SolverError, solve, solve_linear

__version__ = "0.1.0"

__all__ = [
    "Bessel", "ConvergenceRow", "DGSystem", "Domain", "EdgeTag", "FluxParams",
    "IndicatorReport", "Mesh", "PlaneWave", "PlaneWaveSpace", "ProblemData",
    "RunConfig", "Solution", "SolveReport", "SolverError", "Transmission",
    "assemble", "bessel_j", "boundary_data", "directions", "doerfler_mark", "edge_integral_exp",
    "eta_dg", "eta_weighted", "eval_basis", "eval_exact", "export_run",
    "flux_params_on_edge", "linear_reproduction_coeffs", "load_config",
    "make_initial_mesh", "mesh_stats", "parse_config", "refine_leb", "relative_l2_error",
    "run_adaptive", "solve", "solve_linear", "triangle_rule",
]
