"""Broken polynomial spaces for velocity (degree k) and pressure (degree k-1).

Global ordering is element-major, then velocity component, then local
basis index.  Pressure dofs follow the same element-major order, and one
scalar Lagrange multiplier closes the system (mean-zero pressure).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .mesh import Mesh
from .quadrature import element_jacobians

__all__ = ["LagrangeBasis", "DgSpace", "BasisEval", "build_space", "lagrange_basis"]


def _exponents(dim: int, degree: int) -> np.ndarray:
    exps = [e for total in range(degree + 1)
            for e in itertools.product(range(total + 1), repeat=dim) if sum(e) == total]
    return np.array(exps, dtype=np.int64).reshape(-1, dim)


def _nodes(dim: int, degree: int) -> np.ndarray:
    """Equispaced nodes; vertices of the reference simplex come first."""
    if degree == 0:
        return np.full((1, dim), 1.0 / (dim + 1))
    verts = [np.zeros(dim)] + [np.eye(dim)[i] for i in range(dim)]
    rest = []
    for e in itertools.product(range(degree + 1), repeat=dim):
        if sum(e) <= degree:
            p = np.array(e, dtype=float) / degree
            if not any(np.allclose(p, v) for v in verts):
                rest.append(p)
    return np.array(verts + rest)


def _monomials(x: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """m_j(x) for points x (..., d) -> (..., n_mono)."""
    return np.prod(x[..., None, :] ** exps, axis=-1)


def _monomial_derivative(x, exps, order):
    """Mixed partial derivative of each monomial of multi-order ``order``."""
    coef = np.ones(len(exps))
    e = exps.copy()
    for r, o in enumerate(order):
        for _ in range(o):
            coef *= e[:, r]
            e[:, r] = np.maximum(e[:, r] - 1, 0)
    return coef * _monomials(x, e)


class LagrangeBasis:
    """Nodal Lagrange basis of one degree on the reference simplex."""

    def __init__(self, dim: int, degree: int):
        self.dim = dim
        self.degree = degree
        self.exps = _exponents(dim, degree)
        self.nodes = _nodes(dim, degree)
        V = _monomials(self.nodes, self.exps)
        self.coeffs = np.linalg.inv(V)  # phi_i = sum_j coeffs[j, i] m_j
        self.size = len(self.exps)

    def values(self, x):
        """(..., n_basis) values at reference points (..., d)."""
        return _monomials(np.asarray(x, dtype=float), self.exps) @ self.coeffs

    def gradients(self, x):
        """(..., n_basis, d) reference gradients."""
        x = np.asarray(x, dtype=float)
        out = []
        for r in range(self.dim):
            order = [0] * self.dim
            order[r] = 1
            out.append(_monomial_derivative(x, self.exps, order) @ self.coeffs)
        return np.stack(out, axis=-1)

    def hessians(self, x):
        """(..., n_basis, d, d) reference Hessians."""
        x = np.asarray(x, dtype=float)
        d = self.dim
        H = np.zeros(x.shape[:-1] + (self.size, d, d))
        for r in range(d):
            for s in range(r, d):
                order = [0] * d
                order[r] += 1
                order[s] += 1
                val = _monomial_derivative(x, self.exps, order) @ self.coeffs
                H[..., r, s] = val
                H[..., s, r] = val
        return H


@lru_cache(maxsize=None)
def lagrange_basis(dim: int, degree: int) -> LagrangeBasis:
    return LagrangeBasis(dim, degree)


@dataclass(frozen=True)
class BasisEval:
    values: np.ndarray      # (n_basis, n_points)
    gradients: np.ndarray   # (n_basis, n_points, d), physical


class DgSpace:
    """Velocity/pressure DG layout on a mesh."""

    def __init__(self, mesh: Mesh, k: int):
        if k < 1:
            raise ValueError("velocity degree k must be >= 1")
        self.mesh = mesh
        self.k = k
        d = mesh.dim
        self.dim = d
        self.vel_basis = lagrange_basis(d, k)
        self.pre_basis = lagrange_basis(d, k - 1)
        self.nb = comb(k + d, d)
        self.npb = comb(k - 1 + d, d)
        ne = mesh.n_elements
        self.n_vel_dofs = ne * d * self.nb
        self.n_pre_dofs = ne * self.npb
        self.n_dofs = self.n_vel_dofs + self.n_pre_dofs + 1
        self.vel_offsets = np.arange(ne) * d * self.nb
        self.pre_offsets = self.n_vel_dofs + np.arange(ne) * self.npb
        self.multiplier_index = self.n_dofs - 1
        v0, J, det = element_jacobians(mesh.vertices, mesh.elements)
        self.v0, self.J, self.detJ = v0, J, det
        self.invJ = np.linalg.inv(J)

    @property
    def n_unknowns(self) -> int:
        """Velocity plus pressure dofs (the multiplier excluded)."""
        return self.n_vel_dofs + self.n_pre_dofs

    def vel_dof(self, element, component, local):
        return self.vel_offsets[element] + component * self.nb + local

    def pre_dof(self, element, local):
        return self.pre_offsets[element] + local

    def vel_dofs(self, element) -> np.ndarray:
        """(d, nb) global velocity indices of an element."""
        return self.vel_offsets[element] + np.arange(self.dim * self.nb).reshape(self.dim, self.nb)

    def to_reference(self, element_ids, points):
        """Reference coordinates of physical points (E, Q, d) in elements (E,)."""
        el = np.asarray(element_ids)
        return np.einsum("erc,eqc->eqr", self.invJ[el], points - self.v0[el][:, None, :])

    def to_physical(self, element_ids, xhat):
        """Physical images (E, Q, d) of reference points (Q, d)."""
        el = np.asarray(element_ids)
        return self.v0[el][:, None, :] + np.einsum("ecr,qr->eqc", self.J[el], xhat)

    def eval_basis(self, element_id: int, points, pressure: bool = False) -> BasisEval:
        basis = self.pre_basis if pressure else self.vel_basis
        xhat = self.to_reference(np.array([element_id]), np.asarray(points, float)[None])[0]
        vals = basis.values(xhat)
        grads = basis.gradients(xhat) @ self.invJ[element_id]
        return BasisEval(vals.T, np.transpose(grads, (1, 0, 2)))

    def second_derivatives(self, element_id: int, points, pressure: bool = False) -> np.ndarray:
        """(n_basis, n_points, d, d) physical Hessians."""
        basis = self.pre_basis if pressure else self.vel_basis
        xhat = self.to_reference(np.array([element_id]), np.asarray(points, float)[None])[0]
        G = self.invJ[element_id]
        H = np.einsum("qirs,rc,sd->iqcd", basis.hessians(xhat), G, G)
        return H

    def interpolate(self, func, pressure: bool = False) -> np.ndarray:
        """Nodal interpolation of ``func`` (points (..., d) -> (..., ncomp)) elementwise.

        Velocity results follow the global velocity layout; pressure results
        the pressure block (without offset).
        """
        basis = self.pre_basis if pressure else self.vel_basis
        X = self.to_physical(np.arange(self.mesh.n_elements), basis.nodes)  # (E, nb, d)
        vals = np.asarray(func(X))
        if pressure:
            if vals.ndim == 3:
                vals = vals[..., 0]
            return vals.reshape(-1)
        return np.transpose(vals, (0, 2, 1)).reshape(-1)

    def split(self, x):
        """Split a full system vector into (velocity, pressure, multiplier)."""
        return x[: self.n_vel_dofs], x[self.n_vel_dofs: self.n_vel_dofs + self.n_pre_dofs], x[-1]

    def velocity_elementwise(self, vel):
        """(E, d, nb) view of a velocity coefficient vector."""
        return vel.reshape(self.mesh.n_elements, self.dim, self.nb)

    def pressure_elementwise(self, pre):
        return pre.reshape(self.mesh.n_elements, self.npb)


def build_space(mesh: Mesh, k: int) -> DgSpace:
    return DgSpace(mesh, k)
