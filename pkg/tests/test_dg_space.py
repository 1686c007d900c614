import itertools

import numpy as np
import pytest

from oseen_dg.dg_space import build_space, lagrange_basis
from oseen_dg.mesh import generate, refine
from oseen_dg.quadrature import map_to_element, simplex_rule


def random_points_in(space, e, rng, n=7):
    bary = rng.dirichlet(np.ones(space.dim + 1), size=n)
    return bary @ space.mesh.vertices[space.mesh.elements[e]]


@pytest.mark.parametrize("domain,n,k,vel,pre", [
    ("square", 16, 2, 6144, 1536),
    ("cube", 4, 2, 11520, 1536),
    ("square", 1, 1, 12, 2),
])
def test_dof_counts(domain, n, k, vel, pre):
    space = build_space(generate(domain, n), k)
    assert (space.n_vel_dofs, space.n_pre_dofs) == (vel, pre)
    assert space.n_unknowns == vel + pre
    assert space.n_dofs == vel + pre + 1
    assert space.multiplier_index == vel + pre


def test_single_triangle_local_sizes(unit_triangle):
    space = build_space(unit_triangle, 2)
    assert (space.nb, space.npb) == (6, 3)
    assert space.n_dofs == 12 + 3 + 1


def test_k0_rejected(two_triangles):
    with pytest.raises(ValueError):
        build_space(two_triangles, 0)


@pytest.mark.parametrize("dim,k", [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (3, 3)])
def test_partition_of_unity(dim, k, rng):
    basis = lagrange_basis(dim, k)
    x = rng.dirichlet(np.ones(dim + 1), size=20)[:, 1:]
    assert np.allclose(basis.values(x).sum(axis=-1), 1.0, atol=1e-13)
    assert np.allclose(basis.gradients(x).sum(axis=-2), 0.0, atol=1e-11)


@pytest.mark.parametrize("dim,k", [(2, 2), (2, 3), (3, 2), (3, 3)])
def test_kronecker_property(dim, k):
    basis = lagrange_basis(dim, k)
    assert np.allclose(basis.values(basis.nodes), np.eye(basis.size), atol=1e-12)


def test_p1_is_barycentric(rng):
    basis = lagrange_basis(2, 1)
    x = rng.random((10, 2)) * 0.5
    vals = basis.values(x)
    bary = np.column_stack([1 - x.sum(axis=1), x])
    # node order is a permutation of the vertices
    perm = [np.argmax(np.abs(basis.values(v[None])[0])) for v in np.array([[0, 0], [1, 0], [0, 1]], float)]
    assert np.allclose(vals[:, perm], bary, atol=1e-14)


@pytest.mark.parametrize("domain,n,k", [("lshape", 2, 2), ("square", 2, 3), ("cube", 1, 2)])
def test_monomial_roundtrip(domain, n, k, rng):
    mesh = refine(generate(domain, n), [0])
    space = build_space(mesh, k)
    d = space.dim
    for exps in itertools.product(range(k + 1), repeat=d):
        if sum(exps) > k:
            continue
        f = lambda X, a=np.array(exps): np.prod(X ** a, axis=-1)[..., None] * np.ones(d)
        coef = space.interpolate(f)
        vel = space.velocity_elementwise(coef)
        for e in range(mesh.n_elements):
            pts = random_points_in(space, e, rng)
            approx = vel[e] @ space.eval_basis(e, pts).values
            assert np.allclose(approx, f(pts).T, atol=1e-11)


def test_gradient_of_interpolant(rng):
    space = build_space(generate("square", 2), 2)
    f = lambda X: np.stack([X[..., 0] ** 2 * 1.5 - X[..., 1], X[..., 0] * X[..., 1]], axis=-1)
    vel = space.velocity_elementwise(space.interpolate(f))
    e = 3
    pts = random_points_in(space, e, rng)
    grad = np.einsum("ci,iqr->qcr", vel[e], space.eval_basis(e, pts).gradients)
    x, y = pts.T
    exact = np.stack([np.stack([3 * x, -np.ones_like(x)], -1), np.stack([y, x], -1)], axis=1)
    assert np.allclose(grad, exact, atol=1e-12)


def test_hessian_zero_for_p1(two_triangles, rng):
    space = build_space(two_triangles, 1)
    H = space.second_derivatives(0, random_points_in(space, 0, rng))
    assert np.allclose(H, 0.0)


def test_laplacian_of_x_squared(rng):
    space = build_space(generate("lshape", 2), 2)
    vel = space.velocity_elementwise(space.interpolate(lambda X: np.stack([X[..., 0] ** 2, 0 * X[..., 0]], -1)))
    for e in range(space.mesh.n_elements):
        H = space.second_derivatives(e, random_points_in(space, e, rng))
        lap = np.einsum("ci,iqrr->qc", vel[e], H)
        assert np.allclose(lap[:, 0], 2.0, atol=1e-11)
        assert np.allclose(lap[:, 1], 0.0, atol=1e-11)


def test_p3_laplacian_hand_oracle(rng):
    space = build_space(refine(generate("square", 2), [1, 4]), 3)

    def f(X):
        x, y = X[..., 0], X[..., 1]
        return np.stack([x**3 + x * y**2 - 2 * y**3 + x**2 * y, x * y], -1)

    vel = space.velocity_elementwise(space.interpolate(f))
    for e in range(space.mesh.n_elements):
        pts = random_points_in(space, e, rng)
        x, y = pts.T
        lap = np.einsum("ci,iqrr->qc", vel[e], space.second_derivatives(e, pts))
        # f_xx = 6x + 2y, f_yy = 2x - 12y
        assert np.allclose(lap[:, 0], 8 * x - 10 * y, atol=1e-10)
        assert np.allclose(lap[:, 1], 0.0, atol=1e-10)


def test_layout_is_a_bijection():
    space = build_space(generate("lshape", 2), 2)
    vel = np.concatenate([space.vel_dofs(e).ravel() for e in range(space.mesh.n_elements)])
    assert np.array_equal(np.sort(vel), np.arange(space.n_vel_dofs))
    pre = np.concatenate([space.pre_dof(e, np.arange(space.npb)) for e in range(space.mesh.n_elements)])
    assert np.array_equal(np.sort(pre), space.n_vel_dofs + np.arange(space.n_pre_dofs))
    x = np.arange(space.n_dofs, dtype=float)
    u, p, c = space.split(x)
    assert len(u) == space.n_vel_dofs and len(p) == space.n_pre_dofs and c == space.multiplier_index


def test_pressure_interpolation_integrates_exactly():
    space = build_space(generate("square", 2), 3)
    coef = space.pressure_elementwise(space.interpolate(lambda X: (X[..., 0] * X[..., 1] + X[..., 0] ** 2)[..., None],
                                                        pressure=True))
    rule = simplex_rule(2, 6)
    total = 0.0
    for e in range(space.mesh.n_elements):
        pts, w = map_to_element(rule, space.mesh, e)
        total += np.sum(w * (coef[e] @ space.eval_basis(e, pts, pressure=True).values))
    assert total == pytest.approx(4 / 3, rel=1e-13)
