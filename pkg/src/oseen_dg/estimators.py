"""Residual a posteriori indicators for primal and adjoint eigenpairs.

Per element tau:

* eta_R^2 = h_tau^2 ||lam u + mu Lap u - (beta.grad) u - grad p||^2 + ||div u||^2
* eta_F^2 = 1/2 sum over interior faces of h_F ||[[p I - mu grad u + u (x) beta]]||^2
* eta_J^2 = sum over faces of gamma / h_F ||[[u]]||^2 (boundary: the trace u (x) n)

The adjoint versions flip the sign of every convective term.  All norms
are complex L2 norms.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembly import default_degree
from .dg_space import DgSpace
from .fields import BetaField
from .integration import FaceSide, face_data, volume_data

__all__ = [
    "IndicatorField",
    "residual_indicator",
    "face_indicator",
    "jump_indicator",
    "adjoint_indicators",
    "compute_indicators",
    "write_indicator_csv",
]


@dataclass
class IndicatorField:
    eta_R_sq: np.ndarray
    eta_F_sq: np.ndarray
    eta_J_sq: np.ndarray
    star_R_sq: np.ndarray | None = None
    star_F_sq: np.ndarray | None = None
    star_J_sq: np.ndarray | None = None

    @property
    def eta_tau_sq(self) -> np.ndarray:
        return self.eta_R_sq + self.eta_F_sq + self.eta_J_sq

    @property
    def star_tau_sq(self) -> np.ndarray | None:
        if self.star_R_sq is None:
            return None
        return self.star_R_sq + self.star_F_sq + self.star_J_sq

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.eta_tau_sq.sum()))

    @property
    def eta_star(self) -> float | None:
        s = self.star_tau_sq
        return None if s is None else float(np.sqrt(s.sum()))

    @property
    def total(self) -> np.ndarray:
        """Marking quantity eta_tau^2 + eta*_tau^2."""
        s = self.star_tau_sq
        return self.eta_tau_sq if s is None else self.eta_tau_sq + s

    def __add__(self, other: "IndicatorField") -> "IndicatorField":
        def add(a, b):
            if a is None or b is None:
                return a if b is None else b
            return a + b
        return IndicatorField(*(add(getattr(self, f), getattr(other, f)) for f in self.__dataclass_fields__))


def _check_pair(space: DgSpace, pair):
    if len(pair.vel) != space.n_vel_dofs or len(pair.pre) != space.n_pre_dofs:
        raise ValueError("eigenpair does not belong to this space")


def _coeffs(space: DgSpace, pair):
    u = np.asarray(pair.vel).reshape(space.mesh.n_elements, space.dim, space.nb)
    p = np.asarray(pair.pre).reshape(space.mesh.n_elements, space.npb)
    return u, p


def _residual(space, pair, mu, beta, conv_sign, degree):
    _check_pair(space, pair)
    vd = volume_data(space, degree or default_degree(space), hessians=True)
    u, p = _coeffs(space, pair)
    U = np.einsum("qi,eci->eqc", vd.phi, u)
    G = np.einsum("eqir,eci->eqcr", vd.dphi, u)
    lap = np.einsum("eqirr,eci->eqc", vd.ddphi, u)
    gp = np.einsum("eqar,ea->eqr", vd.dpsi, p)
    r = pair.lam * U + mu * lap - gp
    if beta is not None and not beta.is_zero:
        r = r - conv_sign * np.einsum("eqr,eqcr->eqc", beta(vd.points), G)
    div = np.einsum("eqcc->eq", G)
    h = space.mesh.element_diameters
    vol = np.einsum("eq,eqc->e", vd.weights, np.abs(r) ** 2)
    return h**2 * vol + np.einsum("eq,eq->e", vd.weights, np.abs(div) ** 2)


def _trace(side: FaceSide, u, p):
    el = side.elements
    U = np.einsum("fqi,fci->fqc", side.phi, u[el])
    G = np.einsum("fqir,fci->fqcr", side.dphi, u[el])
    P = np.einsum("fqa,fa->fq", side.psi, p[el])
    return U, G, P


def _face(space, pair, mu, beta, conv_sign, degree):
    _check_pair(space, pair)
    out = np.zeros(space.mesh.n_elements)
    fd = face_data(space, degree or default_degree(space), "interior")
    if not len(fd.faces):
        return out
    u, p = _coeffs(space, pair)
    Up, Gp, Pp = _trace(fd.plus, u, p)
    Um, Gm, Pm = _trace(fd.minus, u, p)
    n = fd.normals
    jump = (Pp - Pm)[..., None] * n[:, None, :] - mu * np.einsum("fqcr,fr->fqc", Gp - Gm, n)
    if beta is not None and not beta.is_zero:
        bn = np.einsum("fqc,fc->fq", beta(fd.points), n)
        jump = jump + conv_sign * (Up - Um) * bn[..., None]
    val = 0.5 * fd.h_F * np.einsum("fq,fqc->f", fd.weights, np.abs(jump) ** 2)
    np.add.at(out, fd.plus.elements, val)
    np.add.at(out, fd.minus.elements, val)
    return out


def residual_indicator(space: DgSpace, pair, mu: float, beta: BetaField | None, degree: int | None = None):
    """Per-element eta_R^2."""
    return _residual(space, pair, mu, beta, +1.0, degree)


def face_indicator(space: DgSpace, pair, mu: float, beta: BetaField | None, degree: int | None = None):
    """Per-element eta_F^2; each interior face is shared half and half."""
    return _face(space, pair, mu, beta, +1.0, degree)


def jump_indicator(space: DgSpace, pair, gamma: float, degree: int | None = None):
    """Per-element eta_J^2.

    Every owner of an interior face receives the full face term.
    """
    _check_pair(space, pair)
    degree = degree or default_degree(space)
    u, p = _coeffs(space, pair)
    out = np.zeros(space.mesh.n_elements)
    for which in ("interior", "boundary"):
        fd = face_data(space, degree, which)
        if not len(fd.faces):
            continue
        Up, _, _ = _trace(fd.plus, u, p)
        diff = Up
        if which == "interior":
            Um, _, _ = _trace(fd.minus, u, p)
            diff = Up - Um
        val = gamma / fd.h_F * np.einsum("fq,fqc->f", fd.weights, np.abs(diff) ** 2)
        np.add.at(out, fd.plus.elements, val)
        if which == "interior":
            np.add.at(out, fd.minus.elements, val)
    return out


def adjoint_indicators(space: DgSpace, adjoint_pair, mu: float, beta: BetaField | None, gamma: float,
                       degree: int | None = None):
    """Starred (eta*_R^2, eta*_F^2, eta*_J^2) for an adjoint eigenpair."""
    return (_residual(space, adjoint_pair, mu, beta, -1.0, degree),
            _face(space, adjoint_pair, mu, beta, -1.0, degree),
            jump_indicator(space, adjoint_pair, gamma, degree))


def compute_indicators(space: DgSpace, pair, mu: float, beta: BetaField | None, gamma: float,
                       adjoint_pair=None, degree: int | None = None) -> IndicatorField:
    field = IndicatorField(residual_indicator(space, pair, mu, beta, degree),
                           face_indicator(space, pair, mu, beta, degree),
                           jump_indicator(space, pair, gamma, degree))
    if adjoint_pair is not None:
        field.star_R_sq, field.star_F_sq, field.star_J_sq = adjoint_indicators(
            space, adjoint_pair, mu, beta, gamma, degree)
    return field


def write_indicator_csv(field: IndicatorField, path) -> None:
    """One row per element: id, eta_R^2, eta_F^2, eta_J^2 and the starred triple."""
    n = len(field.eta_R_sq)
    star = [field.star_R_sq, field.star_F_sq, field.star_J_sq]
    star = [s if s is not None else np.full(n, np.nan) for s in star]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element_id", "eta_R_sq", "eta_F_sq", "eta_J_sq", "eta_R_star_sq", "eta_F_star_sq", "eta_J_star_sq"])
        for i in range(n):
            w.writerow([i] + [f"{v:.17g}" for v in (field.eta_R_sq[i], field.eta_F_sq[i], field.eta_J_sq[i],
                                                       star[0][i], star[1][i], star[2][i])])
