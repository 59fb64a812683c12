"""Constrained CG projection of EG output, error norms, EOCs and line profiles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fe import (cell_quadrature_grid, cell_quadrature_points, evaluate_on_cell_quadrature, evaluate_on_cells,
                 evaluate_on_grid, local_matrices)
from .mesh import MeshDescriptor, corner_extreme, gather, patch_extreme, scatter
from .problems import ProblemDescriptor, ProblemError
from .semidiscrete import EGState


class ProjectionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# projections

def vertex_index_grid(mesh: MeshDescriptor) -> np.ndarray:
    """Global vertex ids of the local vertices of every cell, (ny, nx, 4)."""
    ids = np.arange(mesh.n_vertices).reshape(mesh.vertex_shape)
    return gather(ids)


def consistent_mass_matrix(mesh: MeshDescriptor) -> sp.csr_matrix:
    lm = local_matrices(mesh)
    ids = vertex_index_grid(mesh).reshape(-1, 4)
    rows = np.repeat(ids, 4, axis=1).ravel()
    cols = np.tile(ids, (1, 4)).ravel()
    vals = np.tile(lm.mass.ravel(), ids.shape[0])
    N = mesh.n_vertices
    return sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsr()


def l2_projection_rhs(mesh: MeshDescriptor, state: EGState) -> np.ndarray:
    """int phi_i u_h^EG = sum_e [sum_j m^e_ij u_j + m^e_i delta_e], shaped like u."""
    lm = local_matrices(mesh)
    uc = gather(state.u)
    local = uc @ lm.mass.T + lm.lumped * state.delta[..., None]
    return scatter(local)


def l2_projection(mesh: MeshDescriptor, state: EGState, rtol: float = 1e-12,
                  maxiter: int | None = None) -> np.ndarray:
    """Consistent-mass L2 projection of u_h^EG into the CG space (Jacobi-preconditioned CG)."""
    M = consistent_mass_matrix(mesh)
    b = l2_projection_rhs(mesh, state).ravel()
    if maxiter is None:
        maxiter = 10 * mesh.n_vertices
    diag = M.diagonal()
    precond = spla.LinearOperator(M.shape, matvec=lambda x: x / diag)
    x, info = spla.cg(M, b, x0=state.u.ravel().copy(), rtol=rtol, atol=0.0, maxiter=maxiter, M=precond)
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(M @ x - b) / (bnorm if bnorm > 0 else 1.0)
    if info != 0 or not np.isfinite(res) or res > 10 * rtol:
        raise ProjectionError(f"L2 projection did not converge: info={info}, relative residual={res:.3e}")
    return x.reshape(mesh.vertex_shape)


@dataclass
class FcrResult:
    u: np.ndarray          # u^FCR
    u_low: np.ndarray      # u^L
    alpha: np.ndarray      # alpha_e^FCR, (ny, nx)
    u_min: np.ndarray
    u_max: np.ndarray
    f: np.ndarray          # f_i^{e,FCR}, (ny, nx, 4)


def fcr_bounds(state: EGState):
    """u_i^{max,FCR} = max(max over patch U_e, max over stencil u_j); likewise min."""
    U, u = state.U, state.u
    smax = patch_extreme(corner_extreme(u, np.maximum), np.maximum)
    smin = patch_extreme(corner_extreme(u, np.minimum), np.minimum)
    umax = np.maximum(patch_extreme(U, np.maximum), smax)
    umin = np.minimum(patch_extreme(U, np.minimum), smin)
    return umin, umax


def fcr_alpha(f, lumped_e, u_low_e, umin_e, umax_e):
    """Elementwise factor: min over local vertices of the three-case ratio."""
    up = np.maximum(0.0, lumped_e * (umax_e - u_low_e))
    down = np.minimum(0.0, lumped_e * (umin_e - u_low_e))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(f > 0, np.minimum(1.0, up / np.where(f > 0, f, 1.0)),
                     np.where(f < 0, np.minimum(1.0, down / np.where(f < 0, f, -1.0)), 1.0))
    return r.min(axis=-1)


def fcr_project(mesh: MeshDescriptor, state: EGState, uH: np.ndarray | None = None) -> FcrResult:
    """Bound-preserving flux-corrected remap of u_h^EG into the CG space."""
    if uH is None:
        uH = l2_projection(mesh, state)
    lm = local_matrices(mesh)
    me = lm.lumped
    lumped = scatter(np.broadcast_to(me, state.U.shape + (4,)))
    u_low = scatter(me * state.U[..., None]) / lumped
    hc = gather(uH)
    uc = gather(state.u)
    f = (me * hc - hc @ lm.mass.T + uc @ lm.mass.T
         + me * state.delta[..., None] - me * state.U[..., None])
    umin, umax = fcr_bounds(state)
    alpha = fcr_alpha(f, me, gather(u_low), gather(umin), gather(umax))
    u_fcr = u_low + scatter(alpha[..., None] * f) / lumped
    return FcrResult(u_fcr, u_low, alpha, umin, umax, f)


def diagnostics(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState) -> dict:
    """Total mass, total entropy of the cell averages and extrema of U and u."""
    area = mesh.cell_area
    return {
        "mass": float(area * np.sum(state.U)),
        "entropy": float(area * np.sum(problem.entropy(state.U))),
        "U_min": float(np.min(state.U)),
        "U_max": float(np.max(state.U)),
        "u_min": float(np.min(state.u)),
        "u_max": float(np.max(state.u)),
    }


# ---------------------------------------------------------------------------
# errors

def _exact_on_grid(problem: ProblemDescriptor, xs, ys, t, gradient=False):
    if problem.exact is None:
        raise ProblemError(f"no exact solution is available for problem {problem.name!r}")
    if problem.exact_is_x_only:
        v = np.broadcast_to(problem.exact(xs, 0.0 * xs, t)[None, :], (ys.size, xs.size))
        if not gradient:
            return v
        gx, gy = problem.exact_gradient(xs, 0.0 * xs, t)
        shape = (ys.size, xs.size)
        return v, np.broadcast_to(gx[None, :], shape), np.broadcast_to(gy[None, :], shape)
    X, Y = np.meshgrid(xs, ys)
    v = problem.exact(X, Y, t)
    if not gradient:
        return v
    gx, gy = problem.exact_gradient(X, Y, t)
    return v, gx, gy


def _exact_on_cells(problem: ProblemDescriptor, x, y, t):
    """(u, du/dx, du/dy) on the (ny, nx, qy, qx) cell layout, broadcast where x-only."""
    if problem.exact is None:
        raise ProblemError(f"no exact solution is available for problem {problem.name!r}")
    if problem.exact_is_x_only:
        X, Y = x[None, :, None, :], 0.0 * x[None, :, None, :]
    else:
        X = np.broadcast_to(x[None, :, None, :], (y.shape[0], x.shape[0], y.shape[1], x.shape[1]))
        Y = np.broadcast_to(y[:, None, :, None], X.shape)
    gx, gy = problem.exact_gradient(X, Y, t)
    return problem.exact(X, Y, t), gx, gy


def error_norms(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState, t: float | None = None) -> dict:
    """L1, L2, broken H1 seminorm and full H1 norm of u_h^EG - u by 3x3 Gauss per cell."""
    t = state.t if t is None else t
    x, wx, y, wy = cell_quadrature_points(mesh)
    ex, ex_gx, ex_gy = _exact_on_cells(problem, x, y, t)
    v, gx, gy = evaluate_on_cells(mesh, state.U, state.u, with_gradient=True)
    # uniform cells share one (qy, qx) weight table
    w = np.outer(wy[0], wx[0]).ravel()

    def integrate(a):
        return float(np.sum(a.reshape(-1, w.size) @ w))

    e = v - ex
    l1 = integrate(np.abs(e))
    l2 = np.sqrt(integrate(e * e))
    semi = np.sqrt(integrate((gx - ex_gx) ** 2 + (gy - ex_gy) ** 2))
    return {"L1": l1, "L2": l2, "H1semi": semi, "H1": float(np.hypot(l2, semi))}


def accumulate_time_norms(step_errors, dt: float):
    """(l_inf(L1), l2(H1)); entry 0 is the initial time, entries 1..N the time levels."""
    step_errors = list(step_errors)
    if not step_errors:
        return 0.0, 0.0
    linf = max(float(e["L1"]) for e in step_errors)
    l2 = float(np.sqrt(sum(dt * float(e["H1"]) ** 2 for e in step_errors[1:])))
    return linf, l2


def pairwise_rates(errors) -> list:
    """log2(E_2h / E_h) for consecutive levels; None where a level is degenerate."""
    out = []
    for coarse, fine in zip(errors[:-1], errors[1:]):
        out.append(float(np.log2(coarse / fine)) if coarse > 0 and fine > 0 else None)
    return out


def difference_norms(mesh_c: MeshDescriptor, state_c: EGState, mesh_f: MeshDescriptor, state_f: EGState):
    """L1 and L2 norms of the EG difference on the 3x3 Gauss points of the finer mesh."""
    xs, ys, W = cell_quadrature_grid(mesh_f)
    vf = evaluate_on_cell_quadrature(mesh_f, state_f.U, state_f.u)
    if mesh_c == mesh_f:
        vc = evaluate_on_cell_quadrature(mesh_c, state_c.U, state_c.u)
    else:
        vc = evaluate_on_grid(mesh_c, state_c.U, state_c.u, xs, ys)
    d = vf - vc
    return float(np.sum(W * np.abs(d))), float(np.sqrt(np.sum(W * d * d)))


def eoc_from_differences(d_coarse: float, d_fine: float) -> float:
    if not (d_fine > 0 and d_coarse > 0):
        raise ValueError(f"degenerate refinement: differences {d_coarse!r}, {d_fine!r}")
    return float(np.log2(d_coarse / d_fine))


def three_level_eoc(levels):
    """levels = [(mesh_4h, state_4h), (mesh_2h, state_2h), (mesh_h, state_h)] -> (EOC_L1, EOC_L2)."""
    (m4, s4), (m2, s2), (m1, s1) = levels
    a1, a2 = difference_norms(m4, s4, m2, s2)
    b1, b2 = difference_norms(m2, s2, m1, s1)
    return eoc_from_differences(a1, b1), eoc_from_differences(a2, b2)


# ---------------------------------------------------------------------------
# line profiles

def sample_cg(mesh: MeshDescriptor, u: np.ndarray, x, y) -> np.ndarray:
    """Bilinear interpolation of nodal values at arbitrary points (clamped to the domain)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx = np.clip((x - mesh.x_min) / mesh.hx, 0.0, mesh.nx)
    sy = np.clip((y - mesh.y_min) / mesh.hy, 0.0, mesh.ny)
    i = np.minimum(np.floor(sx).astype(np.int64), mesh.nx - 1)
    j = np.minimum(np.floor(sy).astype(np.int64), mesh.ny - 1)
    tx, ty = sx - i, sy - j
    return ((1 - tx) * (1 - ty) * u[j, i] + tx * (1 - ty) * u[j, i + 1]
            + (1 - tx) * ty * u[j + 1, i] + tx * ty * u[j + 1, i + 1])


def line_points(start, end, n: int):
    s = np.linspace(0.0, 1.0, n)
    x = start[0] + s * (end[0] - start[0])
    y = start[1] + s * (end[1] - start[1])
    return s * np.hypot(end[0] - start[0], end[1] - start[1]), x, y


def midline_profile(mesh: MeshDescriptor, u: np.ndarray, y: float | None = None, n: int | None = None):
    """(arc length, x, y, value) along the horizontal line y (default: mid-height)."""
    y = 0.5 * (mesh.y_min + mesh.y_max) if y is None else y
    n = mesh.nx + 1 if n is None else n
    s, xs, ys = line_points((mesh.x_min, y), (mesh.x_max, y), n)
    return s, xs, ys, sample_cg(mesh, u, xs, ys)


def diagonal_profile(mesh: MeshDescriptor, u: np.ndarray, n: int | None = None):
    """Profile from the top-left to the bottom-right corner of the domain."""
    n = max(mesh.nx, mesh.ny) + 1 if n is None else n
    s, xs, ys = line_points((mesh.x_min, mesh.y_max), (mesh.x_max, mesh.y_min), n)
    return s, xs, ys, sample_cg(mesh, u, xs, ys)


def count_sign_changes(values, tol: float = 1e-10) -> int:
    """Sign changes of successive differences, ignoring differences smaller than tol."""
    d = np.diff(np.asarray(values, dtype=float))
    s = np.sign(d[np.abs(d) > tol])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def monotone_segments(values, tol: float = 1e-10) -> int:
    return count_sign_changes(values, tol) + 1


def profile_l1_distance(s, a, b) -> float:
    """Trapezoidal L1 distance of two profiles sampled at the same arc-length points."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return float(np.sum(0.5 * (d[1:] + d[:-1]) * np.diff(s)))
