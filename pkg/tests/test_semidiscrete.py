import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egmcl import EGState, assemble, build_mesh, get_problem
from egmcl.fe import local_matrices
from egmcl.mesh import gather, patch_areas, scatter
from egmcl.problems import OUTWARD_NORMALS, PROBLEM_NAMES, llf_flux
from egmcl.semidiscrete import (PAIRS, _bar_state, face_divergence, graph_viscosity, high_order_cell_rhs,
                                high_order_nodal_rhs, low_order_cell_rhs, low_order_nodal_rhs, pair_matrix,
                                raw_element_contributions, reconstruct_nodal_time_derivative, to_vertices)

from conftest import random_state


def constant_state(problem, mesh, c):
    return EGState(np.full(mesh.cell_shape, c), np.full(mesh.vertex_shape, c), 0.0)


def test_burgers_face_bar_state():
    b = _bar_state(get_problem("burgers"), 0.0, 1.0, (1.0, 0.0), 1.0, 1e-14)
    assert b == pytest.approx(0.25)


@pytest.mark.parametrize("name", ["kpp-smooth", "kpp-rotational"])
def test_constant_state_is_steady(name):
    # KPP has outflow on every side, so any constant is consistent with the boundary data
    p = get_problem(name)
    mesh = build_mesh(p.domain, 4, 3)[0]
    c = p.invariant_interval[0]
    r = assemble(p, mesh, constant_state(p, mesh, c))
    assert np.abs(r.qL).max() < 1e-13 and np.abs(r.qH).max() < 1e-13
    assert np.abs(r.F.x).max() < 1e-13 and np.abs(r.F.y).max() < 1e-13
    assert np.abs(r.gL).max() < 1e-13 and np.abs(r.udot).max() < 1e-13
    assert np.abs(r.f_elem).max() < 1e-13
    bar_ij, bar_ji = r.bar_u_pair
    assert np.allclose(bar_ij[r.d > 0], c) and np.allclose(bar_ji[r.d > 0], c)


def test_constant_with_matching_inflow_advection():
    p = get_problem("advection")
    mesh = build_mesh(p.domain, 3, 3)[0]
    # u_in(x=0, t=0.5) = cos(-pi/2) = 0
    st_ = EGState(np.zeros(mesh.cell_shape), np.zeros(mesh.vertex_shape), 0.5)
    r = assemble(p, mesh, st_)
    assert np.abs(r.qL).max() < 1e-14 and np.abs(r.gL).max() < 1e-14


def test_nodal_time_derivative():
    mesh = build_mesh((0, 1, 0, 1), 3, 3)[0]
    c = 2.5
    udot = reconstruct_nodal_time_derivative(mesh, np.full(mesh.cell_shape, c * mesh.cell_area))
    assert udot[1, 1] == pytest.approx(c)
    qH = np.arange(9.0).reshape(3, 3)
    udot = reconstruct_nodal_time_derivative(mesh, qH)
    assert udot[0, 0] == pytest.approx(qH[0, 0] / mesh.cell_area)
    assert np.all(reconstruct_nodal_time_derivative(mesh, np.zeros((3, 3))) == 0)


def test_burgers_pair_bar_state_by_hand():
    p = get_problem("burgers")
    mesh = build_mesh((0, 1, 0, 1), 1, 1)[0]
    u = np.array([[0.0, 1.0], [0.5, 0.5]])  # u_0 = 0, u_1 = 1 along the bottom edge
    st_ = EGState(np.array([[0.5]]), u, 0.3)
    _, d, (bij, _), *_ = low_order_nodal_rhs(p, mesh, st_)
    c = local_matrices(mesh).gradient
    c01 = c[0, 1]
    k = PAIRS.index((0, 1))
    # lambda_ij |c_ij| = max(|u_i|, |u_j|) |c_ij . (1, 0)|
    assert d[0, 0, k] == pytest.approx(max(abs(c[0, 1, 0]), abs(c[1, 0, 0])))
    assert d[0, 0, k] == pytest.approx(1 / 6)
    expected = 0.5 - (0.5 * 1.0 - 0.0) * c01[0] / (2 * d[0, 0, k])
    assert bij[0, 0, k] == pytest.approx(expected)


def test_graph_viscosity_symmetric_and_nonnegative(problem):
    mesh = build_mesh(problem.domain, 3, 2)[0]
    st_ = random_state(problem, 3, 2, 7)
    d = graph_viscosity(problem, mesh, gather(st_.u))
    D = pair_matrix(d, d)
    assert np.all(D >= 0) and np.allclose(D, np.swapaxes(D, -1, -2))


def test_raw_element_contributions_term_isolation():
    # U = ubar and udot = 0 leave only sum_j d_ij (u_i - u_j)
    p = get_problem("kpp-smooth")
    mesh = build_mesh(p.domain, 1, 1)[0]
    u = np.array([[0.8, 0.81], [0.82, 0.85]])
    st_ = EGState(np.array([[u.mean()]]), u)
    f = raw_element_contributions(p, mesh, st_, np.zeros_like(u))
    d = pair_matrix(*(graph_viscosity(p, mesh, gather(u)),) * 2)[0, 0]
    uc = gather(u)[0, 0]
    expected = [sum(d[i, j] * (uc[i] - uc[j]) for j in range(4)) for i in range(4)]
    np.testing.assert_allclose(f[0, 0], expected, atol=1e-15)


def test_to_vertices_matches_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 3, 6)), rng.normal(size=(2, 3, 6))
    out = np.zeros((2, 3, 4))
    for k, (i, j) in enumerate(PAIRS):
        out[..., i] += a[..., k]
        out[..., j] += b[..., k]
    np.testing.assert_allclose(to_vertices(a, b), out)


@given(st.sampled_from(PROBLEM_NAMES), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
@settings(max_examples=60, deadline=None)
def test_element_zero_sums_and_splitting(name, nx, ny, seed):
    p = get_problem(name)
    mesh = build_mesh(p.domain, nx, ny)[0]
    st_ = random_state(p, nx, ny, seed)
    r = assemble(p, mesh, st_)
    scale = st_.scale()
    assert np.abs(r.f_elem.sum(axis=-1)).max() <= 1e-12 * scale * max(1.0, np.abs(r.f_elem).max())
    assert np.abs(r.qL + face_divergence(r.F) - r.qH).max() <= 1e-11 * scale
    gH = high_order_nodal_rhs(p, mesh, st_, r.udot)
    assert np.abs(r.gL + scatter(r.f_elem) - gH).max() <= 1e-11 * scale


def _oracle_qH_advection(mesh, st_, t):
    """-sum over faces of the 7-point Gauss integral of LLF(u_EG^-, u_EG^+) . n_out."""
    p = get_problem("advection")
    g, w = np.polynomial.legendre.leggauss(7)
    s, w = 0.5 * (g + 1), 0.5 * w
    nx, ny = mesh.nx, mesh.ny
    delta = st_.U - 0.25 * (st_.u[:-1, :-1] + st_.u[:-1, 1:] + st_.u[1:, :-1] + st_.u[1:, 1:])

    def eg(j, i, xi, eta):
        if not (0 <= i < nx and 0 <= j < ny):
            return None
        c = st_.u[j:j + 2, i:i + 2]
        val = (c[0, 0] * (1 - xi) * (1 - eta) + c[0, 1] * xi * (1 - eta)
               + c[1, 0] * (1 - xi) * eta + c[1, 1] * xi * eta)
        return val + delta[j, i]

    q = np.zeros((ny, nx))
    for j in range(ny):
        for i in range(nx):
            total = 0.0
            for side, (di, dj) in (("W", (-1, 0)), ("E", (1, 0)), ("S", (0, -1)), ("N", (0, 1))):
                n = OUTWARD_NORMALS[side]
                length = mesh.hy if side in "WE" else mesh.hx
                for sk, wk in zip(s, w):
                    xi, eta = {"W": (0, sk), "E": (1, sk), "S": (sk, 0), "N": (sk, 1)}[side]
                    um = eg(j, i, xi, eta)
                    xo = {"W": (1, sk), "E": (0, sk), "S": (sk, 1), "N": (sk, 0)}[side]
                    up = eg(j + dj, i + di, *xo)
                    if up is None:
                        if p.is_inflow(side):
                            x = mesh.x_min + mesh.hx * (i + xi)
                            y = mesh.y_min + mesh.hy * (j + eta)
                            up = p.inflow_datum(x, y, t)
                        else:
                            up = um
                    total += wk * length * float(llf_flux(p, um, up, n))
            q[j, i] = -total
    return q


def test_high_order_cell_rhs_against_dense_quadrature():
    p = get_problem("advection")
    mesh = build_mesh((0.0, 1.0, 0.0, 0.5), 2, 1)[0]
    u = np.array([[0.3, -0.2, 0.9], [0.5, 0.1, -0.4]])
    U = np.array([[0.4, -0.1]])
    st_ = EGState(U, u, 0.3)
    qH, _ = high_order_cell_rhs(p, mesh, st_)
    np.testing.assert_allclose(qH, _oracle_qH_advection(mesh, st_, 0.3), atol=1e-10, rtol=0)


def test_low_order_cell_rhs_bar_state_identity(problem):
    # qL = sum over faces of |S| lambda (Ubar - U_e) for each cell
    mesh = build_mesh(problem.domain, 3, 3)[0]
    st_ = random_state(problem, 3, 3, 11)
    qL, bar, lam, A, *_ = low_order_cell_rhs(problem, mesh, st_)
    U = st_.U
    acc = (mesh.hy * (lam.x[:, :-1] * (bar.x[:, :-1] - U) + lam.x[:, 1:] * (bar.x[:, 1:] - U))
           + mesh.hx * (lam.y[:-1] * (bar.y[:-1] - U) + lam.y[1:] * (bar.y[1:] - U)))
    np.testing.assert_allclose(qL, acc, atol=1e-13)


def test_lumped_masses_and_a():
    p = get_problem("kpp-smooth")
    mesh = build_mesh(p.domain, 2, 2)[0]
    st_ = random_state(p, 2, 2, 0)
    r = assemble(p, mesh, st_, high_order=False)
    np.testing.assert_allclose(r.lumped, patch_areas(mesh) / 4)
    assert r.qH is None and r.F is None
    np.testing.assert_allclose(r.a * r.lumped, scatter(r.gamma))
