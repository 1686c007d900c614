"""Interior-penalty DG discretization of the Oseen eigenvalue problem.

Velocity is discontinuous P_k, pressure discontinuous P_{k-1} on simplicial
meshes in 2D and 3D, with residual a posteriori indicators for primal and
adjoint eigenpairs and an adaptive bisection loop.
"""
from .adaptivity import AdaptConfig, AdaptTrace, dorfler_mark, match_eigenvalues, run_algorithm1
from .assembly import SystemMatrices, assemble_adjoint_direct, assemble_primal
from .dg_space import DgSpace, build_space
from .eigensolver import (EigenPair, NonConvergenceError, SingularFactorError, shift_invert_arnoldi,
                          solve_adjoint, solve_adjoint_system, solve_primal_system, sparse_lu)
from .estimators import IndicatorField, compute_indicators
from .fields import make_beta
from .mesh import Mesh, generate, refine

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig", "AdaptTrace", "DgSpace", "EigenPair", "IndicatorField", "Mesh",
    "NonConvergenceError", "SingularFactorError", "SystemMatrices",
    "assemble_adjoint_direct", "assemble_primal", "build_space", "compute_indicators",
    "dorfler_mark", "generate", "make_beta", "match_eigenvalues", "refine", "run_algorithm1",
    "shift_invert_arnoldi", "solve_adjoint", "solve_adjoint_system", "solve_primal_system", "sparse_lu",
]
