"""Uniform rectangular meshes and their connectivity.

Numbering conventions (0-based):

* cells are row-major, ``e = j * nx + i`` for the cell in column ``i`` and row ``j``;
* vertices are row-major, ``k = j * (nx + 1) + i``;
* the local vertices of a cell are ordered SW, SE, NW, NE;
* the faces of a cell are ordered W, E, S, N;
* ghost cells are labelled ``E_h, E_h + 1, ...`` in the order in which boundary
  faces are met when cells are visited row-major and faces W, E, S, N.

The solver kernels use the equivalent structured ``(ny, nx)`` / ``(ny+1, nx+1)``
array layout; the index sets below are the explicit view of the same mesh.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FACE_NAMES = ("W", "E", "S", "N")
FACE_NORMALS = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
# local vertex pairs on each face, ordered along the face
FACE_LOCAL_VERTICES = np.array([[0, 2], [1, 3], [0, 1], [2, 3]])
# reference coordinates of the local vertices
LOCAL_VERTEX_COORDS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class MeshDescriptor:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / self.ny

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_vertices(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_boundary_faces(self) -> int:
        return 2 * self.nx + 2 * self.ny

    @property
    def cell_shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def vertex_shape(self) -> tuple[int, int]:
        return (self.ny + 1, self.nx + 1)

    def vertex_coordinates(self):
        """Return 1D arrays ``(xs, ys)`` of vertex coordinates per axis."""
        xs = self.x_min + self.hx * np.arange(self.nx + 1)
        ys = self.y_min + self.hy * np.arange(self.ny + 1)
        return xs, ys

    def cell_centers(self):
        xs = self.x_min + self.hx * (np.arange(self.nx) + 0.5)
        ys = self.y_min + self.hy * (np.arange(self.ny) + 0.5)
        return xs, ys

    def face_area(self, face: int) -> float:
        return self.hy if face < 2 else self.hx


@dataclass(frozen=True)
class Connectivity:
    cell_vertices: np.ndarray       # (E, 4) global vertex ids, SW SE NW NE
    vertex_cells: tuple             # per vertex: sorted array of incident cells
    vertex_stencil: tuple           # per vertex: sorted array N_i (includes i)
    cell_neighbors: np.ndarray      # (E, 4) neighbor or ghost label, faces W E S N
    face_normals: np.ndarray        # (4, 2) outward unit normals per face slot
    face_areas: np.ndarray          # (E, 4)
    ghost_faces: np.ndarray         # (n_ghost, 2) rows of (cell, face slot), indexed by label - E

    @property
    def n_cells(self) -> int:
        return self.cell_vertices.shape[0]

    def is_ghost(self, label: int) -> bool:
        return label >= self.n_cells

    def boundary_faces(self, e: int) -> list[tuple[int, int]]:
        """Return ``[(face slot, ghost label), ...]`` for the boundary faces of cell e."""
        return [(f, int(lab)) for f, lab in enumerate(self.cell_neighbors[e]) if lab >= self.n_cells]

    def face_vertices(self, e: int, face: int) -> np.ndarray:
        return self.cell_vertices[e, FACE_LOCAL_VERTICES[face]]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_mesh(domain, nx: int, ny: int) -> tuple[MeshDescriptor, Connectivity]:
    x_min, x_max, y_min, y_max = (float(v) for v in domain)
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")
    if not (x_max > x_min and y_max > y_min):
        raise MeshError(f"degenerate rectangle {domain!r}")
    nx, ny = int(nx), int(ny)
    mesh = MeshDescriptor(x_min, x_max, y_min, y_max, nx, ny)

    E = nx * ny
    jj, ii = np.divmod(np.arange(E), nx)
    sw = jj * (nx + 1) + ii
    cell_vertices = np.stack([sw, sw + 1, sw + nx + 1, sw + nx + 2], axis=1)

    neighbors = np.empty((E, 4), dtype=np.int64)
    neighbors[:, 0] = np.where(ii > 0, np.arange(E) - 1, -1)
    neighbors[:, 1] = np.where(ii < nx - 1, np.arange(E) + 1, -1)
    neighbors[:, 2] = np.where(jj > 0, np.arange(E) - nx, -1)
    neighbors[:, 3] = np.where(jj < ny - 1, np.arange(E) + nx, -1)
    missing = neighbors < 0
    neighbors[missing] = E + np.arange(np.count_nonzero(missing))
    ghost_rows = np.argwhere(missing)           # row-major: cell first, then face

    areas = np.tile(np.array([mesh.hy, mesh.hy, mesh.hx, mesh.hx]), (E, 1))

    # cells around each vertex, ascending (stable sort keeps cell order)
    flat = cell_vertices.ravel()
    order = np.argsort(flat, kind="stable")
    splits = np.cumsum(np.bincount(flat, minlength=mesh.n_vertices))[:-1]
    vertex_cells = tuple(_freeze(c) for c in np.split(order // 4, splits))
    # vertices sharing a cell with vertex (j, i): the clipped 3x3 block around it
    nvx, nvy = nx + 1, ny + 1
    vertex_stencil = []
    for j in range(nvy):
        rows = np.arange(max(j - 1, 0), min(j + 1, ny) + 1)[:, None] * nvx
        for i in range(nvx):
            vertex_stencil.append(_freeze((rows + np.arange(max(i - 1, 0), min(i + 1, nx) + 1)).ravel()))
    vertex_stencil = tuple(vertex_stencil)

    conn = Connectivity(
        cell_vertices=_freeze(cell_vertices),
        vertex_cells=vertex_cells,
        vertex_stencil=vertex_stencil,
        cell_neighbors=_freeze(neighbors),
        face_normals=_freeze(FACE_NORMALS.copy()),
        face_areas=_freeze(areas),
        ghost_faces=_freeze(ghost_rows.astype(np.int64).reshape(-1, 2)),
    )
    return mesh, conn


def vertex_patch_measure(mesh: MeshDescriptor, conn: Connectivity, i: int) -> float:
    """|Omega_i|: total area of the cells sharing vertex i."""
    return len(conn.vertex_cells[i]) * mesh.cell_area


def patch_areas(mesh: MeshDescriptor) -> np.ndarray:
    """|Omega_i| for all vertices, shaped ``(ny+1, nx+1)``."""
    count = np.zeros(mesh.vertex_shape)
    count[:-1, :-1] += 1
    count[:-1, 1:] += 1
    count[1:, :-1] += 1
    count[1:, 1:] += 1
    return count * mesh.cell_area


def gather(u: np.ndarray) -> np.ndarray:
    """Nodal array ``(ny+1, nx+1)`` -> element array ``(ny, nx, 4)`` (SW SE NW NE)."""
    out = np.empty(u[:-1, :-1].shape + (4,))
    out[..., 0] = u[:-1, :-1]
    out[..., 1] = u[:-1, 1:]
    out[..., 2] = u[1:, :-1]
    out[..., 3] = u[1:, 1:]
    return out


def scatter(a: np.ndarray) -> np.ndarray:
    """Sum element array ``(ny, nx, 4)`` into vertices; fixed summation order."""
    ny, nx = a.shape[:2]
    out = np.zeros((ny + 1, nx + 1) + a.shape[3:])
    out[:-1, :-1] += a[:, :, 0]
    out[:-1, 1:] += a[:, :, 1]
    out[1:, :-1] += a[:, :, 2]
    out[1:, 1:] += a[:, :, 3]
    return out


def patch_extreme(cell_values: np.ndarray, op=np.maximum) -> np.ndarray:
    """Max (or min) over the cells sharing each vertex."""
    fill = -np.inf if op is np.maximum else np.inf
    p = np.pad(cell_values, 1, constant_values=fill)
    return op(op(p[:-1, :-1], p[:-1, 1:]), op(p[1:, :-1], p[1:, 1:]))


def corner_extreme(vertex_values: np.ndarray, op=np.maximum) -> np.ndarray:
    """Max (or min) over the four vertices of each cell."""
    v = vertex_values
    return op(op(v[:-1, :-1], v[:-1, 1:]), op(v[1:, :-1], v[1:, 1:]))


def scatter_extreme(a: np.ndarray, op=np.maximum) -> np.ndarray:
    """Max (or min) of element array ``(ny, nx, 4)`` over the cells sharing each vertex."""
    ny, nx = a.shape[:2]
    fill = -np.inf if op is np.maximum else np.inf
    out = np.full((ny + 1, nx + 1), fill)
    out[:-1, :-1] = op(out[:-1, :-1], a[:, :, 0])
    out[:-1, 1:] = op(out[:-1, 1:], a[:, :, 1])
    out[1:, :-1] = op(out[1:, :-1], a[:, :, 2])
    out[1:, 1:] = op(out[1:, 1:], a[:, :, 3])
    return out
