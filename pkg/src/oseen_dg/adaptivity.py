"""Adaptive loop: solve, estimate, mark (Dörfler), refine.

One run tracks a cluster of consecutive eigenvalues.  Marking uses the sum
over the cluster of the primal and adjoint element indicators.
"""
from __future__ import annotations

import csv
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .assembly import assemble_primal
from .dg_space import build_space
from .eigensolver import solve_adjoint_system, solve_primal_system
from .estimators import compute_indicators
from .fields import make_beta
from .mesh import Mesh, generate, refine

__all__ = [
    "AdaptConfig",
    "AdaptTrace",
    "TraceRow",
    "ClusterMismatchError",
    "dorfler_mark",
    "match_eigenvalues",
    "run_algorithm1",
    "DEFAULT_THETA",
]

log = logging.getLogger(__name__)

DEFAULT_THETA = {"lshape": 0.75, "square": 0.75, "cube": 0.5, "thick_l": 0.5}


class ClusterMismatchError(RuntimeError):
    pass


@dataclass
class AdaptConfig:
    domain: str = "lshape"
    k: int = 2
    gamma: float = 40.0
    mu: float = 1.0
    beta: str = "BETA1"
    theta: float | None = None
    first: int = 1                  # 1-based index of the first cluster eigenvalue
    m: int = 4                      # cluster size
    n0: int = 32                    # cells per direction of the initial mesh
    max_dofs: int | None = None
    max_iterations: int = 30
    tol: float = 1e-8
    sigma: float = 0.0
    seed: int = 0
    references: Sequence[complex] | None = None

    def __post_init__(self):
        if self.theta is None:
            self.theta = DEFAULT_THETA.get(self.domain, 0.5)
        if self.max_dofs is None:
            self.max_dofs = 200_000 if self.domain in ("square", "lshape") else 150_000
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.m < 1 or self.first < 1:
            raise ValueError("cluster must be non-empty with 1-based start")
        if self.references is not None and len(self.references) != self.m:
            raise ValueError("need one reference value per cluster eigenvalue")

    @property
    def dim(self) -> int:
        return 2 if self.domain in ("square", "lshape") else 3


@dataclass
class TraceRow:
    iteration: int
    dofs: int
    n_elements: int
    eigenvalues: list
    eta: list
    eta_star: list
    n_marked: int
    wall_time: float


@dataclass
class AdaptTrace:
    config: AdaptConfig
    rows: list = field(default_factory=list)
    status: str = "ok"

    @property
    def dofs(self) -> np.ndarray:
        return np.array([r.dofs for r in self.rows])

    def eigenvalues(self, j: int = 0) -> np.ndarray:
        return np.array([r.eigenvalues[j] for r in self.rows])

    def relative_errors(self, j: int = 0) -> np.ndarray:
        """Rerr of reference j against its nearest computed cluster member."""
        return np.array([self._rerr(r)[j] for r in self.rows])

    def _rerr(self, row: TraceRow) -> list:
        refs = self.config.references
        perm = match_eigenvalues(refs, row.eigenvalues)
        return [abs(row.eigenvalues[perm[j]] - ref) / abs(ref) for j, ref in enumerate(refs)]

    def header(self) -> list[str]:
        cols = ["iteration", "dofs", "n_elements"]
        for j in range(self.config.m):
            idx = self.config.first + j
            cols += [f"lambda{idx}_re", f"lambda{idx}_im"]
            if self.config.references is not None:
                cols.append(f"rerr{idx}")
            cols += [f"eta{idx}", f"eta_star{idx}"]
        return cols + ["n_marked", "wall_time"]

    def format_row(self, row: TraceRow) -> list[str]:
        out = [str(row.iteration), str(row.dofs), str(row.n_elements)]
        rerr = self._rerr(row) if self.config.references is not None else None
        for j, lam in enumerate(row.eigenvalues):
            out += [f"{lam.real:.17g}", f"{lam.imag:.17g}"]
            if rerr is not None:
                out.append(f"{rerr[j]:.17g}")
            out += [f"{row.eta[j]:.17g}", f"{row.eta_star[j]:.17g}"]
        return out + [str(row.n_marked), f"{row.wall_time:.17g}"]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for r in self.rows:
                w.writerow(self.format_row(r))


def dorfler_mark(indicators, theta: float) -> np.ndarray:
    """Smallest set whose indicator sum reaches ``theta`` times the total.

    Elements are taken by descending indicator, ties by ascending id.  The
    result is sorted by element id.
    """
    eta = np.asarray(indicators, dtype=float)
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise ValueError("indicators must be finite and non-negative")
    total = eta.sum()
    if total == 0.0:
        warnings.warn("all indicators are zero; nothing marked")
        return np.array([], dtype=np.int64)
    order = np.lexsort((np.arange(len(eta)), -eta))
    csum = np.cumsum(eta[order])
    count = int(np.searchsorted(csum, theta * total, side="left")) + 1
    return np.sort(order[: min(count, len(eta))])


def match_eigenvalues(prev: Sequence[complex], cur: Sequence[complex]) -> list:
    """Greedy nearest-neighbour map ``prev index -> cur index`` (None when unmatched)."""
    if not len(prev) or not len(cur):
        raise ValueError("eigenvalue lists must be non-empty")
    dist = np.abs(np.subtract.outer(np.asarray(prev), np.asarray(cur)))
    out = [None] * len(prev)
    used_p, used_c = set(), set()
    for flat in np.argsort(dist, axis=None, kind="stable"):
        i, j = divmod(int(flat), len(cur))
        if i in used_p or j in used_c:
            continue
        out[i] = j
        used_p.add(i)
        used_c.add(j)
    return out


def run_algorithm1(config: AdaptConfig, trace_path=None, mesh: Mesh | None = None) -> AdaptTrace:
    """Run the adaptive loop; rows are appended to ``trace_path`` as they finish.

    Solver failures and cluster mismatches propagate; the partial trace is
    attached to the exception as ``exc.trace``.
    """
    mesh = mesh or generate(config.domain, config.n0)
    beta = make_beta(config.beta, config.dim, domain=config.domain)
    trace = AdaptTrace(config)
    fh = writer = None
    if trace_path is not None:
        fh = Path(trace_path).open("w", newline="")
        writer = csv.writer(fh)
        writer.writerow(trace.header())
        fh.flush()
    nwant = config.first + config.m - 1
    try:
        for it in range(config.max_iterations):
            t0 = time.perf_counter()
            space = build_space(mesh, config.k)
            if space.n_unknowns > config.max_dofs:
                break
            system = assemble_primal(space, config.mu, beta, config.gamma)
            pairs, factor = solve_primal_system(system, nwant, config.sigma, config.tol, config.seed)
            cluster = pairs[config.first - 1:]
            adjoint = solve_adjoint_system(system, cluster, nwant, config.sigma, config.tol,
                                           config.seed, factor=factor)
            del factor
            if len(adjoint) != len(cluster) or not all(a.matched for a in adjoint):
                raise ClusterMismatchError(f"primal and adjoint clusters differ at iteration {it}")
            totals = np.zeros(mesh.n_elements)
            etas, stars = [], []
            for p, a in zip(cluster, adjoint):
                ind = compute_indicators(space, p, config.mu, beta, config.gamma, adjoint_pair=a)
                totals += ind.total
                etas.append(ind.eta)
                stars.append(ind.eta_star)
            marked = dorfler_mark(totals, config.theta)
            row = TraceRow(it, space.n_unknowns, mesh.n_elements, [p.lam for p in cluster], etas, stars,
                           len(marked), time.perf_counter() - t0)
            trace.rows.append(row)
            if writer is not None:
                writer.writerow(trace.format_row(row))
                fh.flush()
            log.info("iteration %d: %d dofs, lambda = %s", it, row.dofs, row.eigenvalues)
            if not len(marked):
                break
            mesh = refine(mesh, marked)
    except RuntimeError as exc:
        trace.status = f"aborted after {len(trace.rows)} iterations: {exc}"
        log.error(trace.status)
        exc.trace = trace
        raise
    finally:
        if fh is not None:
            fh.close()
    return trace
