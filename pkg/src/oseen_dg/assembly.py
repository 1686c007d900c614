"""Sparse assembly of the interior-penalty Oseen eigenproblem.

The velocity block is component-diagonal: every term of the bilinear form
acts on each velocity component with the same scalar matrix.  Assembly
therefore builds one scalar DG operator and replicates it per component.
Row indices are test functions, column indices trial functions.

K = [[A, B^T, 0], [B, 0, c], [0, c^T, 0]],  Mhat = diag(M, 0, 0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .dg_space import DgSpace
from .fields import BetaField
from .integration import FaceData, VolumeData, face_data, volume_data

__all__ = [
    "SystemMatrices",
    "assemble_primal",
    "assemble_adjoint_direct",
    "assemble_mass",
    "dg_norm",
    "dg_norm_matrix",
    "pressure_mass",
    "default_degree",
    "export_matrix_market",
]


@dataclass
class SystemMatrices:
    K: sp.csr_matrix
    Mhat: sp.csr_matrix
    A: sp.csr_matrix
    B: sp.csr_matrix
    c: np.ndarray
    M: sp.csr_matrix
    gamma: float
    mu: float
    space: DgSpace


def default_degree(space: DgSpace) -> int:
    return 2 * space.k + 2


def _check(mu, gamma):
    if not mu > 0:
        raise ValueError("viscosity mu must be positive")
    if not gamma > 0:
        raise ValueError("penalty gamma must be positive")


# --------------------------------------------------------------- scattering
def _expand_scalar(space: DgSpace, row_el, col_el, blocks):
    """Replicate scalar (n, nb, nb) element-pair blocks on every component."""
    nb, d = space.nb, space.dim
    li = np.arange(nb)
    rows, cols, vals = [], [], []
    for c in range(d):
        r = space.vel_offsets[row_el][:, None, None] + c * nb + li[None, :, None]
        q = space.vel_offsets[col_el][:, None, None] + c * nb + li[None, None, :]
        rows.append(np.broadcast_to(r, blocks.shape).ravel())
        cols.append(np.broadcast_to(q, blocks.shape).ravel())
        vals.append(blocks.ravel())
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _coo(rows, cols, vals, shape):
    m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)
    return m.tocsr()


# ------------------------------------------------------------ local kernels
def _volume_scalar(vd: VolumeData, beta: BetaField | None, mu: float, adjoint: bool):
    w = vd.weights
    blocks = mu * np.einsum("eq,eqic,eqjc->eij", w, vd.dphi, vd.dphi)
    if beta is not None and not beta.is_zero:
        b = beta(vd.points)                                      # (E, Q, d)
        bgrad = np.einsum("eqc,eqjc->eqj", b, vd.dphi)           # beta . grad phi_j
        if adjoint:
            div = beta.divergence(vd.points)
            conv = np.einsum("eq,qi,eqj->eij", w, vd.phi, bgrad + div[..., None] * vd.phi[None])
            blocks -= conv
        else:
            blocks += np.einsum("eq,qi,eqj->eij", w, vd.phi, bgrad)
    return blocks


def _face_scalar(fd: FaceData, beta, mu, gamma, interior: bool, adjoint: bool):
    """Scalar face blocks keyed by (test side, trial side)."""
    n = fd.normals
    w = fd.weights
    pen = gamma / fd.h_F
    bn = None
    if beta is not None and not beta.is_zero:
        bn = np.einsum("fqc,fc->fq", beta(fd.points), n)
    sides = [(fd.plus, 1.0)] + ([(fd.minus, -1.0)] if interior else [])
    avg = 0.5 if interior else 1.0
    out = {}
    for t, (St, sgt) in enumerate(sides):
        gnt = np.einsum("fqic,fc->fqi", St.dphi, n)
        for s, (Ss, sgs) in enumerate(sides):
            gns = np.einsum("fqjc,fc->fqj", Ss.dphi, n)
            blk = -mu * avg * sgt * np.einsum("fq,fqj,fqi->fij", w, gns, St.phi)
            blk -= mu * avg * sgs * np.einsum("fq,fqi,fqj->fij", w, gnt, Ss.phi)
            blk += (pen * sgt * sgs)[:, None, None] * np.einsum("fq,fqi,fqj->fij", w, St.phi, Ss.phi)
            if bn is not None:
                if interior:
                    # -[[u (x) beta]] . {v}  (primal);  +{v} . [[u* (x) beta]] (adjoint)
                    conv = 0.5 * sgs * np.einsum("fq,fq,fqi,fqj->fij", w, bn, St.phi, Ss.phi)
                else:
                    conv = 0.5 * np.einsum("fq,fq,fqi,fqj->fij", w, bn, St.phi, Ss.phi)
                blk = blk + conv if adjoint else blk - conv
            out[(t, s)] = (St.elements, Ss.elements, blk)
    return out


def _scalar_operator(space, mu, beta, gamma, degree, adjoint):
    vd = volume_data(space, degree)
    E = space.mesh.n_elements
    el = np.arange(E)
    parts = [(el, el, _volume_scalar(vd, beta, mu, adjoint))]
    for which in ("interior", "boundary"):
        fd = face_data(space, degree, which)
        if len(fd.faces):
            parts += list(_face_scalar(fd, beta, mu, gamma, which == "interior", adjoint).values())
    rows, cols, vals = [], [], []
    for re_, ce, blk in parts:
        r, c, v = _expand_scalar(space, re_, ce, blk)
        rows.append(r)
        cols.append(c)
        vals.append(v)
    n = space.n_vel_dofs
    return _coo(rows, cols, vals, (n, n)), vd


def _divergence_operator(space: DgSpace, vd: VolumeData, degree: int):
    """B[a, (c, j)] = B_h(phi_j e_c, psi_a) and the mean-value column c."""
    nb, npb, d = space.nb, space.npb, space.dim
    E = space.mesh.n_elements
    rows, cols, vals = [], [], []

    def scatter(pel, vel, blk):  # blk (n, npb, d, nb)
        r = space.pre_offsets[pel][:, None, None, None] - space.n_vel_dofs + np.arange(npb)[None, :, None, None]
        q = (space.vel_offsets[vel][:, None, None, None] + np.arange(d)[None, None, :, None] * nb
             + np.arange(nb)[None, None, None, :])
        rows.append(np.broadcast_to(r, blk.shape).ravel())
        cols.append(np.broadcast_to(q, blk.shape).ravel())
        vals.append(blk.ravel())

    el = np.arange(E)
    scatter(el, el, -np.einsum("eq,qa,eqjc->eacj", vd.weights, vd.psi, vd.dphi))
    for which in ("interior", "boundary"):
        fd = face_data(space, degree, which)
        if not len(fd.faces):
            continue
        interior = which == "interior"
        sides = [(fd.plus, 1.0)] + ([(fd.minus, -1.0)] if interior else [])
        avg = 0.5 if interior else 1.0
        for St, _ in sides:
            for Ss, sgs in sides:
                blk = avg * sgs * np.einsum("fq,fqa,fqj,fc->facj", fd.weights, St.psi, Ss.phi, fd.normals)
                scatter(St.elements, Ss.elements, blk)
    B = _coo(rows, cols, vals, (space.n_pre_dofs, space.n_vel_dofs))
    cvec = np.einsum("eq,qa->ea", vd.weights, vd.psi).ravel()
    return B, cvec


def _mass_scalar_blocks(space: DgSpace, vd: VolumeData):
    return np.einsum("eq,qi,qj->eij", vd.weights, vd.phi, vd.phi)


def assemble_mass(space: DgSpace, degree: int | None = None) -> sp.csr_matrix:
    """Block-diagonal velocity mass matrix (n_vel x n_vel)."""
    vd = volume_data(space, degree or default_degree(space))
    el = np.arange(space.mesh.n_elements)
    r, c, v = _expand_scalar(space, el, el, _mass_scalar_blocks(space, vd))
    n = space.n_vel_dofs
    return _coo([r], [c], [v], (n, n))


def pressure_mass(space: DgSpace, degree: int | None = None) -> sp.csr_matrix:
    vd = volume_data(space, degree or default_degree(space))
    blk = np.einsum("eq,qa,qb->eab", vd.weights, vd.psi, vd.psi)
    npb = space.npb
    base = np.arange(space.mesh.n_elements) * npb
    r = np.broadcast_to(base[:, None, None] + np.arange(npb)[None, :, None], blk.shape).ravel()
    c = np.broadcast_to(base[:, None, None] + np.arange(npb)[None, None, :], blk.shape).ravel()
    return _coo([r], [c], [blk.ravel()], (space.n_pre_dofs, space.n_pre_dofs))


def _saddle(space, A, B, cvec, M, gamma, mu):
    nv, npr = space.n_vel_dofs, space.n_pre_dofs
    C = sp.csr_matrix(cvec.reshape(-1, 1))
    K = sp.bmat([[A, B.T, None], [B, None, C], [None, C.T, None]], format="csr")
    Z = sp.csr_matrix((npr + 1, npr + 1))
    Mhat = sp.bmat([[M, None], [None, Z]], format="csr")
    # keep explicit zeros out and fix index dtype for determinism
    K.sort_indices()
    Mhat.sort_indices()
    return SystemMatrices(K, Mhat, A, B.tocsr(), cvec, M, gamma, mu, space)


def assemble_primal(space: DgSpace, mu: float, beta: BetaField | None, gamma: float,
                    degree: int | None = None) -> SystemMatrices:
    """Assemble K and Mhat for the primal problem."""
    _check(mu, gamma)
    degree = degree or default_degree(space)
    A, vd = _scalar_operator(space, mu, beta, gamma, degree, adjoint=False)
    B, cvec = _divergence_operator(space, vd, degree)
    M = assemble_mass(space, degree)
    return _saddle(space, A, B, cvec, M, gamma, mu)


def assemble_adjoint_direct(space: DgSpace, mu: float, beta: BetaField | None, gamma: float,
                            degree: int | None = None) -> SystemMatrices:
    """Assemble the adjoint system from its own bilinear form (not by transposition).

    The velocity block uses ``-v . div(u* (x) beta)`` in the volume and
    ``+{v} . [[u* (x) beta]]`` / ``+1/2 v . (u* (x) beta) n`` on faces; the
    divergence blocks are shared with the primal problem.
    """
    _check(mu, gamma)
    degree = degree or default_degree(space)
    A, vd = _scalar_operator(space, mu, beta, gamma, degree, adjoint=True)
    B, cvec = _divergence_operator(space, vd, degree)
    M = assemble_mass(space, degree)
    return _saddle(space, A, B, cvec, M, gamma, mu)


def dg_norm_matrix(space: DgSpace, gamma: float, degree: int | None = None) -> sp.csr_matrix:
    """Gram matrix of the broken H1 norm plus penalized full jumps."""
    degree = degree or default_degree(space)
    vd = volume_data(space, degree)
    E = space.mesh.n_elements
    el = np.arange(E)
    blocks = _mass_scalar_blocks(space, vd) + np.einsum("eq,eqic,eqjc->eij", vd.weights, vd.dphi, vd.dphi)
    parts = [(el, el, blocks)]
    for which in ("interior", "boundary"):
        fd = face_data(space, degree, which)
        if not len(fd.faces):
            continue
        sides = [(fd.plus, 1.0)] + ([(fd.minus, -1.0)] if which == "interior" else [])
        pen = gamma / fd.h_F
        for St, sgt in sides:
            for Ss, sgs in sides:
                blk = (pen * sgt * sgs)[:, None, None] * np.einsum("fq,fqi,fqj->fij", fd.weights, St.phi, Ss.phi)
                parts.append((St.elements, Ss.elements, blk))
    rows, cols, vals = zip(*(_expand_scalar(space, a, b, blk) for a, b, blk in parts))
    n = space.n_vel_dofs
    return _coo(list(rows), list(cols), list(vals), (n, n))


def dg_norm(space: DgSpace, coefficients, gamma: float) -> float:
    x = np.asarray(coefficients)
    if x.shape != (space.n_vel_dofs,):
        raise ValueError(f"expected {space.n_vel_dofs} velocity coefficients, got {x.shape}")
    N = dg_norm_matrix(space, gamma)
    val = np.vdot(x, N @ x).real
    return float(np.sqrt(max(val, 0.0)))


def export_matrix_market(matrix, path) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix))
