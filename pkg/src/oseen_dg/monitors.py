"""Numerical stability monitors: coercivity of A_h and the discrete inf-sup constant."""
from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as sla

from .assembly import SystemMatrices, dg_norm_matrix, pressure_mass

__all__ = ["coercivity_ratio", "inf_sup_constant"]


def coercivity_ratio(system: SystemMatrices, samples: int = 200, seed: int = 0) -> float:
    """min over random x of Re(x^T A x) / ||x||_h^2."""
    space = system.space
    N = dg_norm_matrix(space, system.gamma)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((space.n_vel_dofs, samples))
    num = np.einsum("is,is->s", X, system.A @ X)
    den = np.einsum("is,is->s", X, N @ X)
    return float(np.min(num / den))


def inf_sup_constant(system: SystemMatrices) -> float:
    """Smallest non-zero singular value of B in the (||.||_h, L2) metrics.

    Solves the dense generalized problem B N^{-1} B^T q = s^2 Mp q and drops
    the constant-pressure kernel.  Intended for small meshes.
    """
    space = system.space
    N = dg_norm_matrix(space, system.gamma).tocsc()
    Mp = pressure_mass(space).toarray()
    Bt = system.B.T.toarray()
    S = system.B @ sla.splu(N).solve(Bt)
    S = 0.5 * (S + S.T)
    s2 = la.eigh(S, Mp, eigvals_only=True)
    s2 = np.sort(np.abs(s2))
    # the constant pressure is the only kernel direction
    return float(np.sqrt(s2[1]))
