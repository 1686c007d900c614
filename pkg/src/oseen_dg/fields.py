"""Divergence-free convection fields used by the benchmarks.

Fields are normalized to unit sup-norm of the Euclidean magnitude over the
computational domain.  The sup is located by dense sampling followed by a
bounded local maximization, so it does not depend on any mesh.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

__all__ = ["BetaField", "make_beta", "linf_norm", "DOMAIN_BOXES", "inside_domain"]

DOMAIN_BOXES = {
    "square": [(-1.0, 1.0), (-1.0, 1.0)],
    "lshape": [(-1.0, 1.0), (-1.0, 1.0)],
    "cube": [(0.0, 1.0)] * 3,
    "thick_l": [(-0.5, 0.5), (0.0, 1.0), (-0.5, 0.5)],
}


def inside_domain(domain: str, x: np.ndarray) -> np.ndarray:
    box = DOMAIN_BOXES[domain]
    ok = np.ones(x.shape[:-1], dtype=bool)
    for i, (a, b) in enumerate(box):
        ok &= (x[..., i] >= a) & (x[..., i] <= b)
    if domain == "lshape":
        ok &= ~((x[..., 0] < 0) & (x[..., 1] < 0))
    elif domain == "thick_l":
        ok &= ~((x[..., 0] > 0) & (x[..., 2] > 0))
    return ok


def _beta2(x):
    px, py = np.pi * x[..., 0], np.pi * x[..., 1]
    return np.stack([np.cos(px) * np.sin(py), -np.sin(px) * np.cos(py)], axis=-1)


def _beta3(x):
    return np.stack([x[..., 1], -x[..., 0]], axis=-1)


def _beta4(x):
    # curl of 1000 (1 - x^2)^2 (1 - y^2)^2
    X, Y = x[..., 0], x[..., 1]
    ax, ay = 1.0 - X**2, 1.0 - Y**2
    return np.stack([-4000.0 * Y * ay * ax**2, 4000.0 * X * ax * ay**2], axis=-1)


def _central_divergence(func, x, eps=1e-6):
    div = np.zeros(x.shape[:-1])
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[i] = eps
        div += (func(x + e)[..., i] - func(x - e)[..., i]) / (2 * eps)
    return div


def linf_norm(func: Callable, domain: str, samples: int | None = None) -> float:
    """sup over the domain of |func(x)| (Euclidean magnitude)."""
    box = DOMAIN_BOXES[domain]
    d = len(box)
    samples = samples or (401 if d == 2 else 61)
    axes = [np.linspace(a, b, samples) for a, b in box]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    X = X[inside_domain(domain, X)]
    mag = np.linalg.norm(func(X), axis=-1)
    best = float(mag.max())
    bounds = list(box)
    for i in np.argsort(mag)[-5:]:
        res = minimize(lambda y: -np.linalg.norm(func(y[None])[0]), X[i], bounds=bounds, method="L-BFGS-B")
        if inside_domain(domain, res.x[None])[0]:
            best = max(best, float(-res.fun))
    return best


@dataclass
class BetaField:
    """A convection field ``x -> beta(x)`` already divided by ``norm``."""

    name: str
    raw: Callable = field(repr=False)
    norm: float = 1.0
    dim: int = 2
    polynomial_degree: int | None = 0
    raw_divergence: Callable | None = field(default=None, repr=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.raw(x) / self.norm

    def divergence(self, x):
        x = np.asarray(x, dtype=float)
        if self.raw_divergence is not None:
            return self.raw_divergence(x) / self.norm
        return _central_divergence(self.raw, x) / self.norm

    @property
    def is_zero(self) -> bool:
        return self.name == "ZERO"


def _zero_div(x):
    return np.zeros(x.shape[:-1])


def _constant(vec):
    vec = np.asarray(vec, dtype=float)
    return lambda x: np.broadcast_to(vec, x.shape[:-1] + vec.shape).copy()


def make_beta(name: str, dim: int = 2, domain: str | None = None, vector=None) -> BetaField:
    """Build a named field: BETA1..BETA4, CONST (needs ``vector``), ZERO.

    BETA1 is (1, 0) in 2D and (0, 0, 1) in 3D.  BETA2..BETA4 are 2D only
    and are normalized over ``domain`` (default L-shape).
    """
    key = name.upper()
    if key == "ZERO":
        return BetaField("ZERO", _constant(np.zeros(dim)), 1.0, dim, 0, _zero_div)
    if key in ("BETA1", "CONST"):
        if vector is None:
            vector = (1.0, 0.0) if dim == 2 else (0.0, 0.0, 1.0)
        vec = np.asarray(vector, dtype=float)
        if len(vec) != dim:
            raise ValueError("constant field has wrong dimension")
        nrm = float(np.linalg.norm(vec))
        return BetaField(key, _constant(vec), nrm if nrm > 0 else 1.0, dim, 0, _zero_div)
    if dim != 2:
        raise ValueError(f"{name} is a two-dimensional field")
    domain = domain or "lshape"
    raw, deg = {"BETA2": (_beta2, None), "BETA3": (_beta3, 1), "BETA4": (_beta4, 7)}.get(key, (None, None))
    if raw is None:
        raise ValueError(f"unknown convection field {name!r}")
    return BetaField(key, raw, linf_norm(raw, domain), 2, deg, _zero_div)
