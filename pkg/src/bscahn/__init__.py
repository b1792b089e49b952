"""Bulk-surface Cahn-Hilliard solver.

P1 bulk-surface finite elements coupled through relaxation parameters
K, L in [0, inf], time-stepped by linearly implicit backward difference
formulae of order 1 to 5.
"""

from .bdf import BdfScheme, History, bdf_coefficients, bootstrap, build_step_operator, extrapolate, run, step
from .fem import DofMap
from .linalg import Factorization, SparseMatrix, block_assemble, factorize, spmv, to_dense
from .manufactured import ExactSolution, default_exact, error_norms, residual_loads, time_composite_errors
from .mesh import Mesh, mesh_stats, refine, unit_disk_mesh, unit_square_mesh
from .potentials import Potential, by_name, double_well
from .system import (CoupledOperator, ModelParams, State, build_a_form,
                     build_coupled_operator, constraint_prolongation, h_of, robin_form)

__version__ = "0.1.0"

__all__ = [
    "BdfScheme", "History", "bdf_coefficients", "bootstrap", "build_step_operator",
    "extrapolate", "run", "step",
    "DofMap",
    "Factorization", "SparseMatrix", "block_assemble", "factorize", "spmv", "to_dense",
    "ExactSolution", "default_exact", "error_norms", "residual_loads",
    "time_composite_errors",
    "Mesh", "mesh_stats", "refine", "unit_disk_mesh", "unit_square_mesh",
    "Potential", "by_name", "double_well",
    "CoupledOperator", "ModelParams", "State", "build_a_form",
    "build_coupled_operator", "constraint_prolongation", "h_of", "robin_form",
    "__version__",
]
