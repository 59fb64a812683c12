"""Local Q1 matrices, quadrature rules and evaluation of EG fields.

All cells of a uniform mesh share the same local matrices, so these are
computed once in closed form. Local vertex order is SW, SE, NW, NE, i.e.
local index ``a + 2 b`` for reference vertex ``(a, b)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import FACE_LOCAL_VERTICES, MeshDescriptor, gather

# 1D building blocks on [0, 1] for the hats L0 = 1 - s, L1 = s
_M1 = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])  # int L_a L_b
_D1 = np.array([[-0.5, 0.5], [-0.5, 0.5]])                        # int L_a L_b'
_I1 = np.array([0.5, 0.5])                                        # int L_a
_S1 = np.array([-1.0, 1.0])                                       # int L_a'

_A = np.array([0, 1, 0, 1])  # x index of each local vertex
_B = np.array([0, 0, 1, 1])  # y index


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (q,) on [0, 1] or (q, 2) on [0, 1]^2
    weights: np.ndarray  # (q,), summing to the reference measure 1


@lru_cache(maxsize=None)
def gauss_1d(n: int) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w)


@lru_cache(maxsize=None)
def gauss_2d(n: int) -> QuadratureRule:
    g = gauss_1d(n)
    X, Y = np.meshgrid(g.points, g.points)  # row = y index
    W = np.outer(g.weights, g.weights)
    return QuadratureRule(np.stack([X.ravel(), Y.ravel()], axis=1), W.ravel())


FACE_RULE = gauss_1d(3)
CELL_RULE = gauss_2d(2)
ERROR_RULE = gauss_1d(3)


def shape_functions(xi, eta):
    """Q1 basis on the reference square, stacked on the last axis (SW SE NW NE)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta], axis=-1)


def shape_gradients(xi, eta):
    """Reference gradients d/dxi, d/deta; shape (..., 4, 2)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    dxi = np.stack([-(1 - eta), 1 - eta, -eta, eta], axis=-1)
    deta = np.stack([-(1 - xi), -xi, 1 - xi, xi], axis=-1)
    return np.stack([dxi, deta], axis=-1)


@dataclass(frozen=True)
class LocalMatrices:
    mass: np.ndarray           # (4, 4) m^e_ij
    lumped: np.ndarray         # (4,)   m^e_i
    gradient: np.ndarray       # (4, 4, 2) c^e_ij = int phi_i grad phi_j
    grad_integral: np.ndarray  # (4, 2) int grad phi_i
    hx: float
    hy: float

    @property
    def gradient_norm(self) -> np.ndarray:
        return np.hypot(self.gradient[..., 0], self.gradient[..., 1])


@lru_cache(maxsize=64)
def _local_matrices(hx: float, hy: float) -> LocalMatrices:
    mass = hx * hy * _M1[_A][:, _A] * _M1[_B][:, _B]
    cx = hy * _D1[_A][:, _A] * _M1[_B][:, _B]
    cy = hx * _M1[_A][:, _A] * _D1[_B][:, _B]
    grad_int = np.stack([hy * _S1[_A] * _I1[_B], hx * _I1[_A] * _S1[_B]], axis=1)
    for a in (mass, cx, cy, grad_int):
        a.setflags(write=False)
    lumped = mass.sum(axis=1)
    lumped.setflags(write=False)
    grad = np.stack([cx, cy], axis=-1)
    grad.setflags(write=False)
    return LocalMatrices(mass, lumped, grad, grad_int, hx, hy)


def local_matrices(mesh: MeshDescriptor, e: int | None = None) -> LocalMatrices:
    """Exact local mass and gradient matrices (identical for every cell)."""
    if e is not None and not 0 <= e < mesh.n_cells:
        raise IndexError(f"cell {e} out of range")
    return _local_matrices(mesh.hx, mesh.hy)


def boundary_trace_weights(mesh: MeshDescriptor, conn, e: int, ghost: int) -> np.ndarray:
    """sigma_{i,ee'} for the four local vertices of cell e on boundary face ee'."""
    slots = np.nonzero(conn.cell_neighbors[e] == ghost)[0]
    if ghost < mesh.n_cells or slots.size != 1:
        raise ValueError(f"label {ghost} is not a boundary face of cell {e}")
    face = int(slots[0])
    sigma = np.zeros(4)
    sigma[FACE_LOCAL_VERTICES[face]] = 0.5 * mesh.face_area(face)
    return sigma


def cell_averages_cg(u: np.ndarray) -> np.ndarray:
    """Mean of u_h over each cell (corner mean, exact for bilinears on rectangles)."""
    return 0.25 * (u[:-1, :-1] + u[:-1, 1:] + u[1:, :-1] + u[1:, 1:])


def cell_average_cg(state, e: int) -> float:
    nx = state.U.shape[1]
    j, i = divmod(e, nx)
    return float(cell_averages_cg(state.u[j:j + 2, i:i + 2])[0, 0])


def evaluate_eg(mesh: MeshDescriptor, state, e: int, ref_point):
    """Return (u_h, u_h^EG, grad u_h) at a reference point of cell e."""
    j, i = divmod(e, mesh.nx)
    corners = state.u[j:j + 2, i:i + 2].ravel()  # SW SE NW NE
    xi, eta = ref_point
    uh = float(shape_functions(xi, eta) @ corners)
    g = shape_gradients(xi, eta).T @ corners
    grad = np.array([g[0] / mesh.hx, g[1] / mesh.hy])
    delta = state.U[j, i] - corners.mean()
    return uh, uh + delta, grad


@lru_cache(maxsize=None)
def _volume_tables():
    pts = CELL_RULE.points
    B = shape_functions(pts[:, 0], pts[:, 1])      # (q, 4)
    G = shape_gradients(pts[:, 0], pts[:, 1])      # (q, 4, 2)
    return B, G, CELL_RULE.weights


def volume_integrals(problem, mesh: MeshDescriptor, u: np.ndarray) -> np.ndarray:
    """int_{K_e} grad phi_i . f'(u_h) dx for every cell and local vertex, (ny, nx, 4)."""
    B, G, w = _volume_tables()
    uq = gather(u) @ B.T                           # (ny, nx, q)
    ax, ay = problem.flux_jacobian(uq)
    ax = np.broadcast_to(ax, uq.shape) * w
    ay = np.broadcast_to(ay, uq.shape) * w
    # hx*hy from the Jacobian, 1/hx and 1/hy from the gradients
    return (ax @ G[:, :, 0]) * mesh.hy + (ay @ G[:, :, 1]) * mesh.hx


def nonlinear_volume_integral(problem, mesh: MeshDescriptor, state, e: int, i: int) -> float:
    """Single-entry version of :func:`volume_integrals`; ``i`` is a local vertex index."""
    j, c = divmod(e, mesh.nx)
    vals = volume_integrals(problem, mesh, state.u[j:j + 2, c:c + 2])
    return float(vals[0, 0, i])


# ---------------------------------------------------------------------------
# evaluation on tensor-product point sets

def _axis_weights(coords: np.ndarray, lo: float, h: float, n: int):
    idx = np.clip(np.floor((coords - lo) / h).astype(np.int64), 0, n - 1)
    t = (coords - lo) / h - idx
    return idx, t


def evaluate_on_grid(mesh: MeshDescriptor, U: np.ndarray, u: np.ndarray, xs, ys,
                     with_gradient: bool = False):
    """Evaluate u_h^EG on the tensor grid ``ys x xs``; result has shape (len(ys), len(xs)).

    Points on interior cell edges are assigned to the cell with the larger index.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    ix, tx = _axis_weights(xs, mesh.x_min, mesh.hx, mesh.nx)
    iy, ty = _axis_weights(ys, mesh.y_min, mesh.hy, mesh.ny)
    # interpolate along x on every vertex row, then along y
    rows = (1.0 - tx) * u[:, ix] + tx * u[:, ix + 1]                 # (ny+1, P)
    uh = (1.0 - ty)[:, None] * rows[iy] + ty[:, None] * rows[iy + 1]  # (Q, P)
    delta = U - cell_averages_cg(u)
    values = uh + delta[np.ix_(iy, ix)]
    if not with_gradient:
        return values
    drow = (u[:, ix + 1] - u[:, ix]) / mesh.hx
    gx = (1.0 - ty)[:, None] * drow[iy] + ty[:, None] * drow[iy + 1]
    gy = (rows[iy + 1] - rows[iy]) / mesh.hy
    return values, gx, gy


def evaluate_on_cells(mesh: MeshDescriptor, U: np.ndarray, u: np.ndarray,
                      rule: QuadratureRule = None, with_gradient: bool = False):
    """u_h^EG at the tensor Gauss points of every cell, laid out as (ny, nx, qy, qx)."""
    rule = ERROR_RULE if rule is None else rule
    s = rule.points
    m = s.size
    L = np.stack([1.0 - s, s], axis=1)                     # (m, 2): hats at the points
    dL = np.array([-1.0, 1.0])
    # tables [qy, qx, b, a] for local vertex a + 2 b: phi = L_a(x) L_b(y)
    B = np.einsum("yb,xa->yxba", L, L).reshape(m * m, 4)
    ny, nx = U.shape
    uc = gather(u)
    delta = U - cell_averages_cg(u)
    values = (uc @ B.T + delta[..., None]).reshape(ny, nx, m, m)
    if not with_gradient:
        return values
    Gx = np.broadcast_to(np.einsum("yb,a->yba", L, dL)[:, None], (m, m, 2, 2)).reshape(m * m, 4)
    Gy = np.broadcast_to(np.einsum("b,xa->xba", dL, L)[None], (m, m, 2, 2)).reshape(m * m, 4)
    gx = (uc @ (Gx.T / mesh.hx)).reshape(ny, nx, m, m)
    gy = (uc @ (Gy.T / mesh.hy)).reshape(ny, nx, m, m)
    return values, gx, gy


def evaluate_on_cell_quadrature(mesh: MeshDescriptor, U: np.ndarray, u: np.ndarray,
                                rule: QuadratureRule = None, with_gradient: bool = False):
    """u_h^EG on the grid of :func:`cell_quadrature_grid`, cell by cell.

    Same result as :func:`evaluate_on_grid` at those points, without locating them.
    """
    def to_grid(vals):                                      # (ny, nx, m, m) -> (ny*m, nx*m)
        ny, nx, m, _ = vals.shape
        return vals.transpose(0, 2, 1, 3).reshape(ny * m, nx * m)

    out = evaluate_on_cells(mesh, U, u, rule, with_gradient)
    return tuple(to_grid(v) for v in out) if with_gradient else to_grid(out)


def cell_quadrature_points(mesh: MeshDescriptor, rule: QuadratureRule = ERROR_RULE):
    """Gauss coordinates and scaled weights per cell column/row: x, wx (nx, m) and y, wy (ny, m)."""
    x = mesh.x_min + mesh.hx * (np.arange(mesh.nx)[:, None] + rule.points[None, :])
    y = mesh.y_min + mesh.hy * (np.arange(mesh.ny)[:, None] + rule.points[None, :])
    wx = np.broadcast_to(rule.weights * mesh.hx, x.shape)
    wy = np.broadcast_to(rule.weights * mesh.hy, y.shape)
    return x, wx, y, wy


def cell_quadrature_grid(mesh: MeshDescriptor, rule: QuadratureRule = ERROR_RULE):
    """Tensor Gauss points of all cells as 1D coordinate arrays plus weight array."""
    xs = (mesh.x_min + mesh.hx * (np.arange(mesh.nx)[:, None] + rule.points[None, :])).ravel()
    ys = (mesh.y_min + mesh.hy * (np.arange(mesh.ny)[:, None] + rule.points[None, :])).ravel()
    wx = np.tile(rule.weights, mesh.nx) * mesh.hx
    wy = np.tile(rule.weights, mesh.ny) * mesh.hy
    return xs, ys, np.outer(wy, wx)
