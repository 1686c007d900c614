"""Shift-invert Krylov-Schur solver for the real pencil K x = lambda Mhat x.

The operator ``x -> (K - sigma Mhat)^{-1} Mhat x`` is applied in complex
arithmetic on top of one real sparse LU factorization.  Mhat is singular
(zero pressure and multiplier blocks), so the operator has a nilpotent
part whose Ritz values are zero.  The start vector is pushed through the
operator twice to remove it and Ritz vectors are purified by one more
application before they are returned.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

__all__ = [
    "EigenPair",
    "SparseLU",
    "SingularFactorError",
    "NonConvergenceError",
    "sparse_lu",
    "saddle_ordering",
    "shift_invert_arnoldi",
    "solve_adjoint",
    "pair_adjoint",
    "solve_primal_system",
    "solve_adjoint_system",
    "dense_pencil_eigenvalues",
    "sort_key",
]

log = logging.getLogger(__name__)

SPURIOUS_RATIO = 1e-8
SINGULAR_PIVOT = 1e-14
# U diagonals are only inspected below this fill; larger factors rely on
# SuperLU's exact-zero detection to avoid copying U.
_DIAG_CHECK_FILL = 20_000_000


class SingularFactorError(RuntimeError):
    """Raised when a pivot is (numerically) zero."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class NonConvergenceError(RuntimeError):
    """Raised when the restarted Arnoldi process runs out of restarts."""


@dataclass
class EigenPair:
    lam: complex
    vel: np.ndarray
    pre: np.ndarray
    residual: float
    vector: np.ndarray = field(repr=False)
    matched: bool = True

    @property
    def multiplier(self) -> complex:
        n = len(self.vel) + len(self.pre)
        return self.vector[n] if len(self.vector) > n else 0.0


# ----------------------------------------------------------------- sparse LU
class SparseLU:
    """SuperLU factors of ``P A P^T`` for an optional symmetric permutation P."""

    def __init__(self, lu, perm: np.ndarray | None, shape):
        self._lu = lu
        self.perm = perm
        self.shape = shape

    @property
    def perm_r(self):
        return self._lu.perm_r

    @property
    def perm_c(self):
        return self._lu.perm_c

    @property
    def L(self):
        return self._lu.L

    @property
    def U(self):
        return self._lu.U

    @property
    def fill(self) -> int:
        return int(self._lu.nnz)

    def solve(self, b: np.ndarray, trans: str = "N") -> np.ndarray:
        """Solve ``A x = b`` (``trans='N'``) or ``A^T x = b`` (``trans='T'``).

        Complex right-hand sides are split into real and imaginary columns.
        """
        b = np.asarray(b)
        cplx = np.iscomplexobj(b)
        rhs = b if self.perm is None else b[self.perm]
        if cplx:
            one = rhs.ndim == 1
            r2 = rhs[:, None] if one else rhs
            stacked = np.hstack([r2.real, r2.imag])
            y = self._lu.solve(np.ascontiguousarray(stacked), trans=trans)
            ncol = r2.shape[1]
            y = y[:, :ncol] + 1j * y[:, ncol:]
            if one:
                y = y[:, 0]
        else:
            y = self._lu.solve(np.asarray(rhs, dtype=float), trans=trans)
        if self.perm is None:
            return y
        x = np.empty_like(y)
        x[self.perm] = y
        return x


def sparse_lu(matrix, pivot_threshold: float = 0.1, ordering: np.ndarray | None = None) -> SparseLU:
    """Threshold-pivoting sparse LU.

    Without ``ordering`` SuperLU's COLAMD column ordering is used.  With an
    explicit symmetric ``ordering`` the matrix is permuted first and factored
    in natural order, which keeps the supplied fill-reducing order intact.
    """
    A = sp.csc_matrix(matrix)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    opts = dict(SymmetricMode=pivot_threshold < 1.0)
    permc = "COLAMD"
    if ordering is not None:
        ordering = np.asarray(ordering)
        A = A[ordering][:, ordering].tocsc()
        permc = "NATURAL"
    try:
        lu = sla.splu(A, permc_spec=permc, diag_pivot_thresh=pivot_threshold, options=opts)
    except RuntimeError as exc:
        raise SingularFactorError(f"sparse LU failed: {exc}") from exc
    if lu.nnz <= _DIAG_CHECK_FILL:
        diag = np.abs(lu.U.diagonal())
        scale = np.abs(A.data).max() if A.nnz else 1.0
        bad = np.flatnonzero(diag <= SINGULAR_PIVOT * scale)
        if len(bad):
            raise SingularFactorError(f"numerically singular pivot at index {bad[0]}", int(bad[0]))
    return SparseLU(lu, ordering, A.shape)


def saddle_ordering(space) -> np.ndarray:
    """Element-block minimum-degree ordering of the saddle system.

    Elements are ordered by minimum degree on the face-adjacency graph; each
    element contributes its velocity then its pressure dofs.  Without the
    multiplier the leading block is singular (constant pressure), so the
    multiplier is placed before the last pressure dof.
    """
    mesh = space.mesh
    ne = mesh.n_elements
    ii = mesh.interior_faces
    G = sp.coo_matrix((np.ones(len(ii)), (mesh.face_plus[ii], mesh.face_minus[ii])), shape=(ne, ne))
    G = (G + G.T + 4.0 * sp.identity(ne)).tocsc()
    if ne > 1:
        glu = sla.splu(G, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
        order = np.argsort(glu.perm_c)
    else:
        order = np.arange(ne)
    vel = space.vel_offsets[order][:, None] + np.arange(space.dim * space.nb)
    pre = space.pre_offsets[order][:, None] + np.arange(space.npb)
    perm = np.hstack([vel, pre]).ravel()
    return np.concatenate([perm[:-1], [space.multiplier_index], perm[-1:]])


# ------------------------------------------------------------ Krylov-Schur
def _quantize(v: float) -> float:
    return float(f"{v:.9e}")


def sort_key(lam: complex):
    """Modulus first, then real part, then the Im >= 0 member of a pair."""
    return (_quantize(abs(lam)), _quantize(lam.real), 0 if lam.imag >= -1e-12 * max(abs(lam), 1.0) else 1)


def _orthogonalize(V, w):
    h = V.conj().T @ w
    w = w - V @ h
    h2 = V.conj().T @ w
    w = w - V @ h2
    return w, h + h2


def _krylov_schur(op, n, nev, ncv, tol, max_restarts, v0, rng):
    """Return (theta, Y) for the nev converged Ritz values of largest modulus."""
    ncv = min(ncv, n)
    V = np.zeros((n, ncv + 1), dtype=complex)
    H = np.zeros((ncv + 1, ncv), dtype=complex)
    V[:, 0] = v0 / np.linalg.norm(v0)
    k = 0
    for restart in range(max_restarts + 1):
        for j in range(k, ncv):
            w, h = _orthogonalize(V[:, : j + 1], op(V[:, j]))
            H[: j + 1, j] = h
            beta = np.linalg.norm(w)
            if j + 1 == n:
                H[j + 1, j] = 0.0
                break
            if beta <= 1e-12 * max(np.abs(h).max(), 1e-300):
                # invariant subspace: continue with a fresh direction
                w = op(op(rng.standard_normal(n) + 1j * rng.standard_normal(n)))
                w, _ = _orthogonalize(V[:, : j + 1], w)
                H[j + 1, j] = 0.0
                V[:, j + 1] = w / np.linalg.norm(w)
            else:
                H[j + 1, j] = beta
                V[:, j + 1] = w / beta
        Hm = H[:ncv, :ncv]
        theta, Y = la.eig(Hm)
        resid = np.abs(H[ncv, ncv - 1] * Y[-1, :])
        scale = np.abs(theta).max()
        real = np.abs(theta) > SPURIOUS_RATIO * scale
        order = [i for i in np.argsort(-np.abs(theta)) if real[i]]
        want = order[:nev]
        if len(want) == nev and np.all(resid[want] <= tol * np.abs(theta[want])):
            return theta[want], V[:, :ncv] @ Y[:, want], restart
        if ncv == n:
            raise NonConvergenceError("pencil has fewer finite eigenvalues than requested")
        # keep the wanted half, lock it into Schur form and restart
        p = min(max(nev + (ncv - nev) // 2, nev + 1), ncv - 1)
        cut = np.sort(np.abs(theta[order]))[::-1][min(p, len(order)) - 1] if order else 0.0
        T, Z, sdim = la.schur(Hm, output="complex", sort=lambda x: abs(x) >= cut * (1 - 1e-12))
        p = int(min(max(sdim, nev), ncv - 1))
        V[:, :p] = V[:, :ncv] @ Z[:, :p]
        V[:, p] = V[:, ncv]
        b = H[ncv, ncv - 1] * Z[ncv - 1, :p]
        H[:] = 0.0
        H[:p, :p] = T[:p, :p]
        H[p, :p] = b
        k = p
    raise NonConvergenceError(f"Arnoldi did not converge within {max_restarts} restarts")


def _normalize(x, Mhat, n_vel):
    xm = Mhat @ x
    nrm = np.sqrt(abs(np.vdot(x, xm).real))
    if nrm == 0:
        nrm = np.linalg.norm(x)
    x = x / nrm
    vel = x[:n_vel]
    i = int(np.argmax(np.abs(vel)))
    if abs(vel[i]) > 0:
        x = x * (abs(vel[i]) / vel[i])
        x[i] = abs(x[i])
    return x


def shift_invert_arnoldi(
    K,
    Mhat,
    sigma: float = 0.0,
    m: int = 4,
    tol: float = 1e-8,
    max_restarts: int = 200,
    *,
    ncv: int | None = None,
    seed: int = 0,
    n_vel: int | None = None,
    n_pre: int = 0,
    ordering: np.ndarray | None = None,
    factor: SparseLU | None = None,
    transpose: bool = False,
) -> list[EigenPair]:
    """The ``m`` eigenpairs of smallest modulus of ``K x = lambda Mhat x``.

    With ``transpose`` the pencil ``(K^T, Mhat^T)`` is solved reusing the
    same factorization of ``K - sigma Mhat``.

    Parameters
    ----------
    sigma : real shift.
    tol : bound on the returned residuals ``||Kx - lambda Mhat x|| / ||x||``.
    n_vel, n_pre : split of the eigenvector into velocity and pressure parts.
    ordering : symmetric fill-reducing permutation for the factorization.
    factor : a precomputed factorization of ``K - sigma Mhat``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    K = sp.csr_matrix(K)
    Mhat = sp.csr_matrix(Mhat)
    n = K.shape[0]
    n_vel = n if n_vel is None else n_vel
    if factor is None:
        factor = _factor_shifted(K, Mhat, sigma, ordering)
    Kop = K.T.tocsr() if transpose else K
    Mop = Mhat.T.tocsr() if transpose else Mhat
    trans = "T" if transpose else "N"

    def op(x):
        return factor.solve(Mop @ x, trans=trans)

    ncv = ncv or max(3 * m + 10, 30)
    rng = np.random.default_rng(seed)
    v0 = op(op(rng.standard_normal(n) + 1j * rng.standard_normal(n)))
    inner = tol
    restarts_left = max_restarts
    while True:
        theta, X, used = _krylov_schur(op, n, m, ncv, inner, restarts_left, v0, rng)
        pairs = []
        for t, x in zip(theta, X.T):
            x = op(x) / t
            lam = sigma + 1.0 / t
            x = _normalize(x, Mop, n_vel)
            res = np.linalg.norm(Kop @ x - lam * (Mop @ x)) / np.linalg.norm(x)
            pairs.append(EigenPair(complex(lam), x[:n_vel], x[n_vel: n_vel + n_pre], float(res), x))
        worst = max(p.residual for p in pairs)
        if worst <= tol:
            break
        restarts_left -= used + 1
        if inner < 1e-15 or restarts_left < 0:
            raise NonConvergenceError(f"residual {worst:.3e} above tolerance {tol:.1e}")
        inner *= 1e-2
        v0 = X.sum(axis=1)
    pairs.sort(key=lambda p: sort_key(p.lam))
    log.debug("arnoldi: %s", [p.lam for p in pairs])
    return pairs


def _factor_shifted(K, Mhat, sigma, ordering):
    Ks = (K - sigma * Mhat) if sigma else K
    if ordering is None:
        return sparse_lu(Ks, pivot_threshold=0.1)
    try:
        return sparse_lu(Ks, pivot_threshold=0.0, ordering=ordering)
    except SingularFactorError:
        return sparse_lu(Ks, pivot_threshold=0.01, ordering=ordering)


def pair_adjoint(primal: Sequence[EigenPair], adjoint: Sequence[EigenPair], tol: float = 1e-6):
    """Reorder ``adjoint`` so entry i is the nearest conjugate of primal i.

    Returns the reordered list; entries without a partner within ``tol``
    (relative) are flagged ``matched=False``.
    """
    remaining = list(adjoint)
    out = []
    for p in primal:
        if not remaining:
            break
        target = np.conj(p.lam)
        dist = [abs(a.lam - target) for a in remaining]
        j = int(np.argmin(dist))
        a = remaining.pop(j)
        a.matched = dist[j] <= tol * max(abs(p.lam), 1.0)
        if not a.matched:
            warnings.warn(f"primal eigenvalue {p.lam} has no adjoint partner within {tol}")
        out.append(a)
    return out


def solve_adjoint(K, Mhat, sigma: float = 0.0, m: int = 4, tol: float = 1e-8, primal=None, **kw):
    """Eigenpairs of the transposed pencil, paired with ``primal`` when given."""
    pairs = shift_invert_arnoldi(K, Mhat, sigma, m, tol, transpose=True, **kw)
    if primal is not None:
        pairs = pair_adjoint(primal, pairs)
    return pairs


def _split_kw(system):
    space = system.space
    return dict(n_vel=space.n_vel_dofs, n_pre=space.n_pre_dofs)


def solve_primal_system(system, m: int = 4, sigma: float = 0.0, tol: float = 1e-8, seed: int = 0,
                        factor: SparseLU | None = None, **kw):
    """Primal eigenpairs of an assembled saddle system (returns pairs and factor)."""
    if factor is None:
        factor = _factor_shifted(system.K, system.Mhat, sigma, saddle_ordering(system.space))
    pairs = shift_invert_arnoldi(system.K, system.Mhat, sigma, m, tol, seed=seed, factor=factor,
                                 **_split_kw(system), **kw)
    return pairs, factor


def solve_adjoint_system(system, primal=None, m: int = 4, sigma: float = 0.0, tol: float = 1e-8,
                         seed: int = 0, factor: SparseLU | None = None, **kw):
    """Adjoint eigenpairs via the transposed saddle system."""
    if factor is None:
        factor = _factor_shifted(system.K, system.Mhat, sigma, saddle_ordering(system.space))
    return solve_adjoint(system.K, system.Mhat, sigma, m, tol, primal=primal, seed=seed,
                         factor=factor, **_split_kw(system), **kw)


def dense_pencil_eigenvalues(A, B) -> np.ndarray:
    """Finite eigenvalues of a dense pencil by QZ, sorted with ``sort_key``."""
    w = la.eig(np.asarray(A), np.asarray(B), right=False)
    w = w[np.isfinite(w)]
    return np.array(sorted(w, key=sort_key))
