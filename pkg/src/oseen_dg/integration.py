"""Basis data at volume and face quadrature points of a whole DG space."""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .dg_space import DgSpace
from .quadrature import face_rule, simplex_rule


@dataclass
class VolumeData:
    points: np.ndarray      # (E, Q, d) physical
    weights: np.ndarray     # (E, Q) scaled by |det J|
    phi: np.ndarray         # (Q, nb) velocity basis values (reference = physical)
    dphi: np.ndarray        # (E, Q, nb, d) physical gradients
    psi: np.ndarray         # (Q, npb) pressure basis values
    dpsi: np.ndarray        # (E, Q, npb, d)
    ddphi: np.ndarray | None = None  # (E, Q, nb, d, d)


@dataclass
class FaceSide:
    elements: np.ndarray    # (F,)
    phi: np.ndarray         # (F, Q, nb)
    dphi: np.ndarray        # (F, Q, nb, d)
    psi: np.ndarray         # (F, Q, npb)


@dataclass
class FaceData:
    faces: np.ndarray       # (F,) global face ids
    points: np.ndarray      # (F, Q, d)
    weights: np.ndarray     # (F, Q)
    normals: np.ndarray     # (F, d), plus -> minus / outward
    h_F: np.ndarray         # (F,)
    plus: FaceSide
    minus: FaceSide | None


def volume_data(space: DgSpace, degree: int, hessians: bool = False) -> VolumeData:
    rule = simplex_rule(space.dim, degree)
    E = space.mesh.n_elements
    pts = space.to_physical(np.arange(E), rule.points)
    w = np.abs(space.detJ)[:, None] * rule.weights[None, :]
    vb, pb = space.vel_basis, space.pre_basis
    dphi = np.einsum("qir,erc->eqic", vb.gradients(rule.points), space.invJ)
    dpsi = np.einsum("qir,erc->eqic", pb.gradients(rule.points), space.invJ)
    dd = None
    if hessians:
        G = space.invJ
        dd = np.einsum("qirs,erc,esd->eqicd", vb.hessians(rule.points), G, G)
    return VolumeData(pts, w, vb.values(rule.points), dphi, pb.values(rule.points), dpsi, dd)


def _side(space: DgSpace, elements: np.ndarray, points: np.ndarray) -> FaceSide:
    xhat = space.to_reference(elements, points)
    vb, pb = space.vel_basis, space.pre_basis
    dphi = np.einsum("fqir,frc->fqic", vb.gradients(xhat), space.invJ[elements])
    return FaceSide(elements, vb.values(xhat), dphi, pb.values(xhat))


def face_data(space: DgSpace, degree: int, which: str) -> FaceData:
    """Quadrature data on ``which`` in {'interior', 'boundary'} faces."""
    mesh = space.mesh
    faces = mesh.interior_faces if which == "interior" else mesh.boundary_faces
    rule = face_rule(mesh.dim, degree)
    V = mesh.vertices[mesh.face_vertices[faces]]          # (F, d, d)
    pts = np.einsum("qa,fac->fqc", rule.barycentric, V)
    w = (mesh.face_measures[faces] * factorial(mesh.dim - 1))[:, None] * rule.weights[None, :]
    plus = _side(space, mesh.face_plus[faces], pts)
    minus = _side(space, mesh.face_minus[faces], pts) if which == "interior" else None
    return FaceData(faces, pts, w, mesh.face_normals[faces], mesh.face_diameters[faces], plus, minus)
