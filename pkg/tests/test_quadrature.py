import itertools
from math import factorial

import numpy as np
import pytest

from oseen_dg.mesh import Mesh, generate
from oseen_dg.quadrature import (MAX_DEGREE, DegenerateElementError, face_rule_and_map, map_to_element,
                                 simplex_rule)


def simplex_monomial(exps):
    """Exact integral of prod x_i^a_i over the reference simplex."""
    num = np.prod([factorial(a) for a in exps])
    return num / factorial(sum(exps) + len(exps))


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("degree", list(range(0, MAX_DEGREE + 1, 2)) + [1, 7, 13, 19])
def test_exact_for_all_monomials(dim, degree):
    rule = simplex_rule(dim, degree)
    assert rule.exact_degree >= degree
    for exps in itertools.product(range(degree + 1), repeat=dim):
        if sum(exps) > degree:
            continue
        approx = np.sum(rule.weights * np.prod(rule.points ** np.array(exps), axis=1))
        assert approx == pytest.approx(simplex_monomial(exps), rel=1e-12, abs=1e-15)


def test_x2y2_on_reference_triangle():
    rule = simplex_rule(2, 4)
    x, y = rule.points.T
    assert np.sum(rule.weights * x**2 * y**2) == pytest.approx(1 / 180, rel=1e-13)


def test_tetrahedron_degree_six():
    rule = simplex_rule(3, 6)
    x, y, z = rule.points.T
    assert np.sum(rule.weights * x**2 * y**2 * z**2) == pytest.approx(8 / factorial(9), rel=1e-12)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_weights_positive_and_sum_to_volume(dim):
    for degree in range(MAX_DEGREE + 1):
        rule = simplex_rule(dim, degree)
        assert np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(1 / factorial(dim), rel=1e-14)
        assert np.all(rule.barycentric >= -1e-14)


def test_degree_out_of_range():
    with pytest.raises(ValueError):
        simplex_rule(2, MAX_DEGREE + 1)
    with pytest.raises(ValueError):
        simplex_rule(2, -1)


def test_map_to_element_scaled_triangle():
    mesh = Mesh(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]), np.array([[0, 1, 2]]))
    rule = simplex_rule(2, 3)
    pts, w = map_to_element(rule, mesh, 0)
    assert w.sum() == pytest.approx(2.0)
    # centroid (2/3, 2/3) times area 2
    assert np.sum(w[:, None] * pts, axis=0) == pytest.approx([4 / 3, 4 / 3])


def test_degenerate_element_rejected():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    with pytest.raises(DegenerateElementError):
        Mesh(verts, np.array([[0, 1, 3], [0, 1, 2]]))


def test_face_rule_lengths_and_diagonal_integral(two_triangles):
    mesh = Mesh(np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]), np.array([[0, 1, 2]]))
    lengths = sorted(face_rule_and_map(mesh, f, 2)[1].sum() for f in range(mesh.n_faces))
    assert lengths == pytest.approx([3.0, 4.0, 5.0])
    diag = [f for f in range(two_triangles.n_faces) if not two_triangles.face_is_boundary[f]][0]
    pts, w, n = face_rule_and_map(two_triangles, diag, 4)
    # x runs over (-1, 1) on the diagonal of length 2 sqrt 2
    assert np.sum(w * pts[:, 0] ** 2) == pytest.approx(2 * np.sqrt(2) * (1 / 3), rel=1e-13)
    assert np.linalg.norm(n) == pytest.approx(1.0)


def test_unit_edge_face_rule(unit_triangle):
    lengths = sorted(face_rule_and_map(unit_triangle, f, 0)[1].sum() for f in range(3))
    assert lengths == pytest.approx([1.0, 1.0, np.sqrt(2)])


def test_global_polynomial_integral():
    mesh = generate("square", 4)
    rule = simplex_rule(2, 6)
    total = 0.0
    for e in range(mesh.n_elements):
        pts, w = map_to_element(rule, mesh, e)
        total += np.sum(w * (pts[:, 0] ** 4 * pts[:, 1] ** 2 + 1.0))
    assert total == pytest.approx(4 / 15 + 4.0, rel=1e-13)


def test_cube_face_measures_sum_to_surface():
    mesh = generate("cube", 2)
    bnd = [f for f in range(mesh.n_faces) if mesh.face_is_boundary[f]]
    area = sum(face_rule_and_map(mesh, f, 1)[1].sum() for f in bnd)
    assert area == pytest.approx(6.0, rel=1e-13)
