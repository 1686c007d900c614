"""Quadrature rules on reference simplices and their affine images.

Rules are conical (Duffy-collapsed) Gauss--Jacobi products. They have
positive weights, interior points and arbitrary polynomial exactness, which
is all the DG assembly needs.

The reference simplex of dimension ``d`` is
``{x : x_i >= 0, sum(x) <= 1}`` with volume ``1/d!``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 20


class DegenerateElementError(ValueError):
    """Raised when an element or face has zero measure."""


@dataclass(frozen=True)
class QuadRule:
    """A quadrature rule on the reference ``dim``-simplex.

    ``points`` holds reference coordinates (n_points, dim); ``barycentric``
    adds the leading coordinate ``1 - sum(x)``.
    """

    dim: int
    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    @property
    def barycentric(self) -> np.ndarray:
        lam0 = 1.0 - self.points.sum(axis=1, keepdims=True)
        return np.hstack([lam0, self.points])

    def __len__(self) -> int:
        return len(self.weights)


def _gauss_jacobi01(n: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0, 1] for the weight (1 - t)**alpha."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (1.0 + x) / 2.0, w / 2.0 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def _collapsed_rule(dim: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    n = max(1, (degree + 2) // 2)
    if dim == 1:
        t, w = _gauss_jacobi01(n, 0.0)
        return t[:, None], w
    if dim == 2:
        # y has weight (1 - y); x = (1 - y) * s
        y, wy = _gauss_jacobi01(n, 1.0)
        s, ws = _gauss_jacobi01(n, 0.0)
        Y, S = np.meshgrid(y, s, indexing="ij")
        pts = np.column_stack([((1.0 - Y) * S).ravel(), Y.ravel()])
        return pts, np.outer(wy, ws).ravel()
    if dim == 3:
        z, wz = _gauss_jacobi01(n, 2.0)
        y, wy = _gauss_jacobi01(n, 1.0)
        s, ws = _gauss_jacobi01(n, 0.0)
        Z, Y, S = np.meshgrid(z, y, s, indexing="ij")
        pts = np.column_stack(
            [((1 - Z) * (1 - Y) * S).ravel(), ((1 - Z) * Y).ravel(), Z.ravel()]
        )
        w = (wz[:, None, None] * wy[None, :, None] * ws[None, None, :]).ravel()
        return pts, w
    raise ValueError(f"unsupported simplex dimension {dim}")


def simplex_rule(dim: int, degree: int) -> QuadRule:
    """Return a rule exact for polynomials of total degree <= ``degree``.

    Only ``dim`` in {1, 2, 3} and ``0 <= degree <= 20`` are supported.
    """
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"quadrature degree must lie in [0, {MAX_DEGREE}], got {degree}")
    if dim == 0:
        return QuadRule(0, np.zeros((1, 0)), np.ones(1), degree)
    pts, w = _collapsed_rule(dim, degree)
    n = max(1, (degree + 2) // 2)
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(dim, pts, w, 2 * n - 1)


def element_jacobians(vertices: np.ndarray, elements: np.ndarray):
    """Affine maps ``x = v0 + J xhat`` for every element.

    Returns ``(v0, J, detJ)`` with shapes (E, d), (E, d, d), (E,).
    """
    P = vertices[elements]
    v0 = P[:, 0, :]
    J = np.transpose(P[:, 1:, :] - v0[:, None, :], (0, 2, 1))
    return v0, J, np.linalg.det(J)


def map_to_element(rule: QuadRule, mesh, element_id: int):
    """Physical quadrature points and weights on one element."""
    v0, J, det = element_jacobians(mesh.vertices, mesh.elements[[element_id]])
    if abs(det[0]) <= 1e-14 * max(1.0, np.abs(J[0]).max() ** mesh.dim):
        raise DegenerateElementError(f"element {element_id} has zero volume")
    pts = v0[0] + rule.points @ J[0].T
    return pts, rule.weights * abs(det[0])


def face_rule(dim: int, degree: int) -> QuadRule:
    """Rule on the reference face simplex of a ``dim``-dimensional mesh."""
    return simplex_rule(dim - 1, degree)


def face_rule_and_map(mesh, face_id: int, degree: int):
    """Physical points, weights and unit normal on one mesh face."""
    rule = face_rule(mesh.dim, degree)
    verts = mesh.vertices[mesh.face_vertices[face_id]]
    measure = mesh.face_measures[face_id]
    if measure <= 0.0:
        raise DegenerateElementError(f"face {face_id} has zero measure")
    pts = rule.barycentric @ verts
    weights = rule.weights * measure * factorial(mesh.dim - 1)
    return pts, weights, mesh.face_normals[face_id].copy()
