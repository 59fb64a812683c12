import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egmcl.mesh import (MeshError, build_mesh, gather, patch_areas, scatter, scatter_extreme,
                        vertex_patch_measure)


def test_two_by_two_counts():
    mesh, conn = build_mesh((0, 1, 0, 1), 2, 2)
    assert mesh.n_cells == 4 and mesh.n_vertices == 9 and mesh.n_boundary_faces == 8
    assert conn.ghost_faces.shape == (8, 2)


def test_single_cell_all_faces_ghost():
    mesh, conn = build_mesh((0, 1, 0, 1), 1, 1)
    assert len(conn.vertex_stencil[0]) == 4
    assert len(conn.boundary_faces(0)) == 4
    assert all(conn.is_ghost(lab) for _, lab in conn.boundary_faces(0))


@pytest.mark.parametrize("nx, ny", [(0, 2), (2, -1), (1.5, 2)])
def test_bad_counts(nx, ny):
    with pytest.raises(MeshError):
        build_mesh((0, 1, 0, 1), nx, ny)


def test_degenerate_rectangle():
    with pytest.raises(MeshError):
        build_mesh((0, 0, 0, 1), 2, 2)


@given(st.integers(1, 6), st.integers(1, 6))
@settings(max_examples=25, deadline=None)
def test_closed_boundary_identity(nx, ny):
    mesh, conn = build_mesh((-1.0, 2.0, 0.5, 1.0), nx, ny)
    s = (conn.face_areas[..., None] * conn.face_normals[None]).sum(axis=1)
    assert np.abs(s).max() < 1e-14


def test_patch_measures():
    mesh, conn = build_mesh((0, 3, 0, 2), 3, 2)
    ids = np.arange(mesh.n_vertices).reshape(mesh.vertex_shape)
    area = mesh.cell_area
    assert vertex_patch_measure(mesh, conn, ids[1, 1]) == pytest.approx(4 * area)
    assert vertex_patch_measure(mesh, conn, ids[0, 0]) == pytest.approx(area)
    assert vertex_patch_measure(mesh, conn, ids[0, 1]) == pytest.approx(2 * area)
    np.testing.assert_allclose(patch_areas(mesh).ravel(),
                               [vertex_patch_measure(mesh, conn, i) for i in range(mesh.n_vertices)])


def test_gather_matches_connectivity():
    mesh, conn = build_mesh((0, 1, 0, 1), 3, 2)
    u = np.arange(mesh.n_vertices, dtype=float).reshape(mesh.vertex_shape)
    np.testing.assert_array_equal(gather(u).reshape(-1, 4), conn.cell_vertices)


def test_scatter_is_adjoint_of_gather():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 4, 4))
    u = rng.normal(size=(4, 5))
    assert np.sum(scatter(a) * u) == pytest.approx(np.sum(a * gather(u)))


def test_scatter_extreme():
    a = np.arange(16, dtype=float).reshape(2, 2, 4)
    m = scatter_extreme(a, np.maximum)
    # vertex (1, 1) is SW of cell (1, 1) (value 12) and NE of cell (0, 0) (value 3)
    assert m[1, 1] == 12 and m[0, 0] == 0 and m[2, 2] == 15
