"""Conforming simplicial meshes for the benchmark domains.

All generators produce Kuhn triangulations of axis-aligned cube families.
Every element carries a Maubach vertex ordering and a tag; bisection of
``(x0, ..., xn)`` with tag ``k`` splits the edge ``x0--xk``.  On Kuhn meshes
this reduces to newest-vertex bisection in 2D and yields conforming, shape
regular refinements in 3D.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass
from math import factorial
from pathlib import Path

import numpy as np

from .quadrature import DegenerateElementError

__all__ = [
    "Face",
    "Mesh",
    "generate_square",
    "generate_lshape",
    "generate_cube",
    "generate_thick_lshape",
    "generate",
    "refine",
    "uniform_refine",
    "conformity_audit",
    "write_mesh",
    "read_mesh",
    "DOMAIN_VOLUMES",
]

DOMAIN_VOLUMES = {"square": 4.0, "lshape": 3.0, "cube": 1.0, "thick_l": 0.75}


@dataclass(frozen=True)
class Face:
    vertex_ids: tuple
    plus_element: int
    minus_element: int | None
    unit_normal: np.ndarray
    h_F: float
    measure: float

    @property
    def is_boundary(self) -> bool:
        return self.minus_element is None


def _signed_volumes(vertices, elements):
    P = vertices[elements]
    J = P[:, 1:, :] - P[:, :1, :]
    d = vertices.shape[1]
    return np.linalg.det(J) / factorial(d)


class Mesh:
    """Immutable simplicial mesh with face connectivity.

    Parameters
    ----------
    vertices : (n_vertices, d) array
    tagged : (n_elements, d+1) int array
        Element vertices in Maubach order.
    tags : (n_elements,) int array
        Bisection tags in ``1..d``.
    generation, parent : optional int arrays
        Bisection depth and parent index in the previous mesh (-1 for roots).
    domain : str, optional
        Name of the generating domain.
    """

    def __init__(self, vertices, tagged, tags=None, generation=None, parent=None, domain=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.dim = self.vertices.shape[1]
        self.tagged = np.ascontiguousarray(tagged, dtype=np.int64)
        ne = len(self.tagged)
        self.tags = np.full(ne, self.dim, dtype=np.int64) if tags is None else np.asarray(tags, dtype=np.int64)
        self.generation = np.zeros(ne, dtype=np.int64) if generation is None else np.asarray(generation, dtype=np.int64)
        self.parent = np.full(ne, -1, dtype=np.int64) if parent is None else np.asarray(parent, dtype=np.int64)
        self.domain = domain

        vol = _signed_volumes(self.vertices, self.tagged)
        elements = self.tagged.copy()
        neg = vol < 0
        elements[neg, 1], elements[neg, 2] = self.tagged[neg, 2], self.tagged[neg, 1]
        self.elements = elements
        self.volumes = np.abs(vol)
        if np.any(self.volumes <= 0):
            raise DegenerateElementError("mesh contains degenerate elements")

        P = self.vertices[self.elements]
        diffs = P[:, :, None, :] - P[:, None, :, :]
        self.element_diameters = np.sqrt((diffs**2).sum(-1)).max(axis=(1, 2))
        self._build_faces()
        for arr in (self.vertices, self.elements, self.tagged, self.tags, self.element_diameters):
            arr.setflags(write=False)

    # ------------------------------------------------------------------ faces
    def _build_faces(self):
        d = self.dim
        ne = self.n_elements
        # local face i is opposite local vertex i
        local = np.array([[j for j in range(d + 1) if j != i] for i in range(d + 1)])
        fv = self.elements[:, local]  # (E, d+1, d)
        keys = np.sort(fv, axis=2).reshape(-1, d)
        uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise ValueError("non-manifold mesh: a face has more than two owners")
        nf = len(uniq)
        owner_elem = np.repeat(np.arange(ne), d + 1)
        owner_loc = np.tile(np.arange(d + 1), ne)
        order = np.argsort(inverse, kind="stable")
        plus = np.full(nf, -1, dtype=np.int64)
        minus = np.full(nf, -1, dtype=np.int64)
        plus_loc = np.full(nf, -1, dtype=np.int64)
        minus_loc = np.full(nf, -1, dtype=np.int64)
        sorted_faces = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_faces[1:] != sorted_faces[:-1]
        plus[sorted_faces[first]] = owner_elem[order[first]]
        plus_loc[sorted_faces[first]] = owner_loc[order[first]]
        second = ~first
        minus[sorted_faces[second]] = owner_elem[order[second]]
        minus_loc[sorted_faces[second]] = owner_loc[order[second]]

        self.face_vertices = uniq
        self.face_plus = plus
        self.face_minus = minus
        self.face_plus_local = plus_loc
        self.face_minus_local = minus_loc
        self.face_is_boundary = minus < 0
        self.element_faces = inverse.reshape(ne, d + 1)

        V = self.vertices[uniq]  # (F, d, d)
        if d == 2:
            t = V[:, 1] - V[:, 0]
            normal = np.column_stack([t[:, 1], -t[:, 0]])
            measure = np.linalg.norm(t, axis=1)
            diam = measure.copy()
        else:
            e1 = V[:, 1] - V[:, 0]
            e2 = V[:, 2] - V[:, 0]
            normal = np.cross(e1, e2)
            measure = 0.5 * np.linalg.norm(normal, axis=1)
            e3 = V[:, 2] - V[:, 1]
            diam = np.max(np.linalg.norm(np.stack([e1, e2, e3]), axis=2), axis=0)
        normal = normal / np.linalg.norm(normal, axis=1)[:, None]
        opposite = self.vertices[self.elements[plus, plus_loc]]
        flip = np.einsum("fi,fi->f", normal, opposite - V[:, 0]) > 0
        normal[flip] *= -1
        self.face_normals = normal
        self.face_measures = measure
        self.face_diameters = diam

    # ------------------------------------------------------------ properties
    @property
    def n_elements(self) -> int:
        return len(self.tagged)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.face_vertices)

    @property
    def h(self) -> float:
        return float(self.element_diameters.max())

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(~self.face_is_boundary)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_is_boundary)

    @property
    def refinement_edge(self) -> np.ndarray:
        """Local edge index (into ``local_edges``) of each element's bisection edge."""
        edges = self.local_edges()
        lookup = {e: i for i, e in enumerate(edges)}
        out = np.empty(self.n_elements, dtype=np.int64)
        for t in range(self.n_elements):
            a = self.tagged[t, 0]
            b = self.tagged[t, self.tags[t]]
            row = list(self.elements[t])
            i, j = sorted((row.index(a), row.index(b)))
            out[t] = lookup[(i, j)]
        return out

    def local_edges(self):
        return list(itertools.combinations(range(self.dim + 1), 2))

    def face(self, i: int) -> Face:
        minus = int(self.face_minus[i])
        return Face(
            tuple(int(v) for v in self.face_vertices[i]),
            int(self.face_plus[i]),
            None if minus < 0 else minus,
            self.face_normals[i].copy(),
            float(self.face_diameters[i]),
            float(self.face_measures[i]),
        )

    @property
    def faces(self) -> list[Face]:
        return [self.face(i) for i in range(self.n_faces)]

    def min_angle(self) -> float:
        """Smallest interior angle (2D) or dihedral angle (3D), in radians."""
        P = self.vertices[self.elements]
        if self.dim == 2:
            angles = []
            for i in range(3):
                a = P[:, (i + 1) % 3] - P[:, i]
                b = P[:, (i + 2) % 3] - P[:, i]
                c = np.einsum("ei,ei->e", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
                angles.append(np.arccos(np.clip(c, -1, 1)))
            return float(np.min(angles))
        # dihedral angle along edge (i, j) between faces opposite k and l
        normals = []
        for i in range(4):
            idx = [j for j in range(4) if j != i]
            n = np.cross(P[:, idx[1]] - P[:, idx[0]], P[:, idx[2]] - P[:, idx[0]])
            n /= np.linalg.norm(n, axis=1)[:, None]
            s = np.sign(np.einsum("ei,ei->e", n, P[:, i] - P[:, idx[0]]))
            normals.append(-n * s[:, None])
        angles = []
        for k, l in itertools.combinations(range(4), 2):
            c = -np.einsum("ei,ei->e", normals[k], normals[l])
            angles.append(np.arccos(np.clip(c, -1, 1)))
        return float(np.min(angles))


# ---------------------------------------------------------------- generators
def _kuhn(dim, shape, origin, spacing, keep=None, domain=None):
    """Kuhn triangulation of a box of ``shape`` cells with cell filter ``keep``."""
    shape = tuple(shape)
    grid = np.stack(np.meshgrid(*[np.arange(s + 1) for s in shape], indexing="ij"), axis=-1).reshape(-1, dim)
    strides = np.array([int(np.prod([s + 1 for s in shape[i + 1:]])) for i in range(dim)])
    cells = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), axis=-1).reshape(-1, dim)
    if keep is not None:
        cells = cells[keep(cells)]
    perms = list(itertools.permutations(range(dim)))
    tets = []
    for perm in perms:
        path = [np.zeros(dim, dtype=int)]
        for axis in perm:
            step = path[-1].copy()
            step[axis] += 1
            path.append(step)
        tets.append(np.stack([(cells + p) @ strides for p in path], axis=1))
    tagged = np.stack(tets, axis=1).reshape(-1, dim + 1)
    used = np.unique(tagged)
    renum = np.full(len(grid), -1, dtype=np.int64)
    renum[used] = np.arange(len(used))
    vertices = np.asarray(origin, dtype=float) + grid[used] * np.asarray(spacing, dtype=float)
    return Mesh(vertices, renum[tagged], domain=domain)


def generate_square(n: int) -> Mesh:
    """(-1, 1)^2 with ``n`` x ``n`` cells, diagonals lower-left to upper-right."""
    if n < 1:
        raise ValueError("n must be positive")
    return _kuhn(2, (n, n), (-1.0, -1.0), (2.0 / n, 2.0 / n), domain="square")


def generate_lshape(n: int) -> Mesh:
    """(-1, 1)^2 minus (-1, 0)^2, cut from the ``n`` x ``n`` square grid."""
    if n < 2 or n % 2:
        raise ValueError("L-shape requires an even n so the re-entrant corner is a grid vertex")
    half = n // 2
    keep = lambda c: ~((c[:, 0] < half) & (c[:, 1] < half))
    return _kuhn(2, (n, n), (-1.0, -1.0), (2.0 / n, 2.0 / n), keep=keep, domain="lshape")


def generate_cube(n: int) -> Mesh:
    """(0, 1)^3 with ``n``^3 cells, 6 Kuhn tetrahedra per cell."""
    if n < 1:
        raise ValueError("n must be positive")
    return _kuhn(3, (n, n, n), (0.0, 0.0, 0.0), (1.0 / n,) * 3, domain="cube")


def generate_thick_lshape(n: int) -> Mesh:
    """(-1/2, 1/2) x (0, 1) x (-1/2, 1/2) minus (0, 1/2) x (0, 1) x (0, 1/2)."""
    if n < 2 or n % 2:
        raise ValueError("thick L-shape requires an even n")
    half = n // 2
    keep = lambda c: ~((c[:, 0] >= half) & (c[:, 2] >= half))
    return _kuhn(3, (n, n, n), (-0.5, 0.0, -0.5), (1.0 / n,) * 3, keep=keep, domain="thick_l")


_GENERATORS = {
    "square": generate_square,
    "lshape": generate_lshape,
    "cube": generate_cube,
    "thick_l": generate_thick_lshape,
}


def generate(domain: str, n: int) -> Mesh:
    try:
        return _GENERATORS[domain](n)
    except KeyError:
        raise ValueError(f"unknown domain {domain!r}") from None


# ---------------------------------------------------------------- refinement
def refine(mesh: Mesh, marked) -> Mesh:
    """Bisect every marked element once, then close to a conforming mesh."""
    marked = sorted({int(t) for t in marked})
    if not marked:
        return mesh
    d = mesh.dim
    verts = [tuple(v) for v in mesh.vertices]
    simplices = [tuple(int(v) for v in row) for row in mesh.tagged]
    tags = [int(t) for t in mesh.tags]
    gens = [int(g) for g in mesh.generation]
    roots = list(range(mesh.n_elements))
    alive = [True] * len(simplices)
    pairs = list(itertools.combinations(range(d + 1), 2))

    def edges_of(s):
        return [(s[i], s[j]) if s[i] < s[j] else (s[j], s[i]) for i, j in pairs]

    edge_elems = defaultdict(set)
    for t, s in enumerate(simplices):
        for e in edges_of(s):
            edge_elems[e].add(t)
    midpoint = {}

    stack = marked[::-1]
    while stack:
        t = stack.pop()
        if not alive[t]:
            continue
        s = simplices[t]
        k = tags[t]
        a, b = s[0], s[k]
        key = (a, b) if a < b else (b, a)
        z = midpoint.get(key)
        if z is None:
            z = len(verts)
            pa, pb = verts[a], verts[b]
            verts.append(tuple(0.5 * (x + y) for x, y in zip(pa, pb)))
            midpoint[key] = z
        newtag = k - 1 if k > 1 else d
        c1 = s[:k] + (z,) + s[k + 1:]
        c2 = s[1:k + 1] + (z,) + s[k + 1:]
        alive[t] = False
        for e in edges_of(s):
            edge_elems[e].discard(t)
        children = []
        for c in (c1, c2):
            cid = len(simplices)
            simplices.append(c)
            tags.append(newtag)
            gens.append(gens[t] + 1)
            roots.append(roots[t])
            alive.append(True)
            for e in edges_of(c):
                edge_elems[e].add(cid)
            children.append(cid)
        # neighbours still holding the bisected edge now carry a hanging vertex
        stack.extend(sorted(edge_elems[key], reverse=True))
        for cid in children:
            if any(e in midpoint for e in edges_of(simplices[cid])):
                stack.append(cid)

    keep = [i for i, a in enumerate(alive) if a]
    return Mesh(
        np.array(verts),
        np.array([simplices[i] for i in keep]),
        tags=np.array([tags[i] for i in keep]),
        generation=np.array([gens[i] for i in keep]),
        parent=np.array([roots[i] for i in keep]),
        domain=mesh.domain,
    )


def uniform_refine(mesh: Mesh, times: int = 1) -> Mesh:
    """Bisect every element ``d`` times per pass (one full Kuhn level per pass)."""
    for _ in range(times * mesh.dim):
        mesh = refine(mesh, range(mesh.n_elements))
    return mesh


def conformity_audit(mesh: Mesh) -> bool:
    """Brute-force check: every face has 1 or 2 owners and no edge midpoint
    of an element is itself a mesh vertex (no hanging nodes).
    """
    d = mesh.dim
    counts = defaultdict(int)
    for row in mesh.elements:
        for f in itertools.combinations(sorted(int(v) for v in row), d):
            counts[f] += 1
    if any(c not in (1, 2) for c in counts.values()):
        return False
    # hanging vertices: an edge midpoint that is a mesh vertex while the edge survives
    index = {tuple(np.round(v, 12)): i for i, v in enumerate(mesh.vertices)}
    for row in mesh.elements:
        for i, j in itertools.combinations(row, 2):
            m = tuple(np.round(0.5 * (mesh.vertices[i] + mesh.vertices[j]), 12))
            if m in index:
                return False
    return True


# ------------------------------------------------------------------------ io
def write_mesh(mesh: Mesh, path) -> None:
    """Plain text: ``dim n_vertices n_elements``, vertex lines, element lines (0-based)."""
    lines = [f"{mesh.dim} {mesh.n_vertices} {mesh.n_elements}"]
    lines += [" ".join(repr(float(x)) for x in v) for v in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in row) for row in mesh.tagged]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    rows = Path(path).read_text().split("\n")
    dim, nv, ne = (int(x) for x in rows[0].split())
    vertices = np.array([[float(x) for x in rows[1 + i].split()] for i in range(nv)])
    elements = np.array([[int(x) for x in rows[1 + nv + i].split()] for i in range(ne)])
    return Mesh(vertices, elements)
