import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egmcl import EGState, build_mesh, get_problem
from egmcl.fe import (boundary_trace_weights, cell_average_cg, evaluate_eg, evaluate_on_grid, local_matrices,
                      nonlinear_volume_integral, volume_integrals)


def bilinear(xi, eta):
    # SW SE NW NE on the reference square
    return np.array([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta])


def test_unit_cell_mass():
    mesh = build_mesh((0, 1, 0, 1), 1, 1)[0]
    m = local_matrices(mesh).mass
    assert m[0, 0] == pytest.approx(1 / 9)
    assert m[0, 1] == pytest.approx(1 / 18) and m[0, 2] == pytest.approx(1 / 18)
    assert m[0, 3] == pytest.approx(1 / 36)


@given(st.floats(0.1, 3), st.floats(0.1, 3))
@settings(max_examples=20, deadline=None)
def test_local_matrices_against_quadrature(hx, hy):
    mesh = build_mesh((0, hx, 0, hy), 1, 1)[0]
    lm = local_matrices(mesh)
    g, w = np.polynomial.legendre.leggauss(4)
    g, w = 0.5 * (g + 1), 0.5 * w
    M = np.zeros((4, 4))
    C = np.zeros((4, 4, 2))
    h = 1e-7
    for a, wa in zip(g, w):
        for b, wb in zip(g, w):
            phi = bilinear(a, b)
            dphi = np.stack([(bilinear(a + h, b) - bilinear(a - h, b)) / (2 * h) / hx,
                             (bilinear(a, b + h) - bilinear(a, b - h)) / (2 * h) / hy], axis=-1)
            M += wa * wb * hx * hy * np.outer(phi, phi)
            C += wa * wb * hx * hy * phi[:, None, None] * dphi[None, :, :]
    np.testing.assert_allclose(lm.mass, M, atol=1e-12)
    np.testing.assert_allclose(lm.gradient, C, atol=1e-8)
    assert np.abs(lm.gradient.sum(axis=1)).max() < 1e-14
    assert lm.mass.sum() == pytest.approx(hx * hy)


def test_boundary_trace_weights():
    mesh, conn = build_mesh((0, 2, 0, 1), 2, 1)
    e = 0
    faces = dict(conn.boundary_faces(e))
    sigma = boundary_trace_weights(mesh, conn, e, faces[0])  # west face, length hy = 1
    np.testing.assert_allclose(sigma, [0.5, 0, 0.5, 0])
    assert sigma.sum() == pytest.approx(mesh.hy)
    with pytest.raises(ValueError):
        boundary_trace_weights(mesh, conn, e, 1)


def test_cell_average_examples():
    for corners, expected in [((0, 0, 0, 4), 1.0), ((1, 2, 3, 4), 2.5), ((7, 7, 7, 7), 7.0)]:
        u = np.array(corners, dtype=float).reshape(2, 2)
        st_ = EGState(np.zeros((1, 1)), u)
        assert cell_average_cg(st_, 0) == pytest.approx(expected)


def test_evaluate_eg():
    mesh = build_mesh((0, 1, 0, 1), 1, 1)[0]
    u = np.array([[1.0, 2.0], [3.0, 5.0]])
    uh, ueg, _ = evaluate_eg(mesh, EGState(np.array([[4.0]]), u), 0, (0.5, 0.5))
    assert uh == pytest.approx(2.75)
    assert ueg == pytest.approx(4.0)
    c = np.full((2, 2), 0.3)
    uh, ueg, grad = evaluate_eg(mesh, EGState(np.array([[0.3]]), c), 0, (0.2, 0.9))
    assert uh == pytest.approx(0.3) and ueg == pytest.approx(0.3) and np.allclose(grad, 0)


def test_volume_integral_linear_advection():
    mesh = build_mesh((0, 2, 0, 3), 1, 1)[0]
    st_ = EGState(np.zeros((1, 1)), np.random.default_rng(0).normal(size=(2, 2)))
    adv = get_problem("advection")
    # int grad phi_i dx = (+-hy/2, +-hx/2); with v = (1, 0) only the x part survives
    expected = [-1.5, 1.5, -1.5, 1.5]
    np.testing.assert_allclose([nonlinear_volume_integral(adv, mesh, st_, 0, i) for i in range(4)], expected)


def test_volume_integral_constant_burgers():
    mesh = build_mesh((0, 1, 0, 2), 1, 1)[0]
    c = 0.7
    vals = volume_integrals(get_problem("burgers"), mesh, np.full((2, 2), c))
    np.testing.assert_allclose(vals[0, 0], c * np.array([-1.0, 1.0, -1.0, 1.0]))


def test_evaluate_on_grid_matches_evaluate_eg():
    rng = np.random.default_rng(5)
    mesh = build_mesh((0, 1, 0, 1), 3, 2)[0]
    st_ = EGState(rng.normal(size=(2, 3)), rng.normal(size=(3, 4)))
    xs = np.array([0.1, 0.5, 0.9])
    ys = np.array([0.2, 0.7])
    vals = evaluate_on_grid(mesh, st_.U, st_.u, xs, ys)
    for a, y in enumerate(ys):
        for b, x in enumerate(xs):
            i, j = int(x / mesh.hx), int(y / mesh.hy)
            ref = (x / mesh.hx - i, y / mesh.hy - j)
            assert vals[a, b] == pytest.approx(evaluate_eg(mesh, st_, j * 3 + i, ref)[1])
