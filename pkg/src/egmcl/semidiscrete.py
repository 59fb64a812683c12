"""Low- and high-order right-hand sides of the coupled EG system.

Face arrays use a global orientation: ``x``-faces have shape ``(ny, nx+1)`` with
normal ``+x`` and ``y``-faces have shape ``(ny+1, nx)`` with normal ``+y``. A
face value ``F`` is the flux exchanged between its "left"/"lower" cell L and
its "right"/"upper" cell R, added to L and subtracted from R. On the boundary
the missing side is a ghost cell carrying the external state. Storing one
value per face makes ``F_ee' = -F_e'e`` exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .fe import FACE_RULE, cell_averages_cg, local_matrices, volume_integrals
from .mesh import MeshDescriptor, gather, patch_areas, scatter
from .problems import OUTWARD_NORMALS, SIDES, ProblemDescriptor, llf_flux

EPS_REL = 1e-14

X_NORMAL = (1.0, 0.0)
Y_NORMAL = (0.0, 1.0)

# side -> (face axis, face index, cell index, local vertices along the face,
#          nodal slices of the face end points, ghost sits on the L side)
SIDE_LAYOUT = {
    "W": ("x", (slice(None), 0), (slice(None), 0), (0, 2),
          ((slice(None, -1), 0), (slice(1, None), 0)), True),
    "E": ("x", (slice(None), -1), (slice(None), -1), (1, 3),
          ((slice(None, -1), -1), (slice(1, None), -1)), False),
    "S": ("y", (0, slice(None)), (0, slice(None)), (0, 1),
          ((0, slice(None, -1)), (0, slice(1, None))), True),
    "N": ("y", (-1, slice(None)), (-1, slice(None)), (2, 3),
          ((-1, slice(None, -1)), (-1, slice(1, None))), False),
}


@dataclass
class EGState:
    """Cell averages ``U`` (ny, nx) and CG nodal values ``u`` (ny+1, nx+1) at time t."""

    U: np.ndarray
    u: np.ndarray
    t: float = 0.0

    @property
    def delta(self) -> np.ndarray:
        return self.U - cell_averages_cg(self.u)

    @property
    def ubar(self) -> np.ndarray:
        return cell_averages_cg(self.u)

    def copy(self) -> "EGState":
        return EGState(self.U.copy(), self.u.copy(), self.t)

    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.u))), float(np.max(np.abs(self.U))))


@dataclass
class FaceField:
    x: np.ndarray
    y: np.ndarray


@dataclass
class RhsDecomposition:
    # cell-average subproblem
    qL: np.ndarray
    lam: FaceField            # lambda_ee' per face
    bar_U: FaceField          # Ubar_ee' per face
    left: FaceField           # U on the L side (ghost state on W/S boundaries)
    right: FaceField          # U on the R side (ghost state on E/N boundaries)
    A: np.ndarray
    # nodal subproblem
    gL: np.ndarray
    d: np.ndarray             # (ny, nx, 6) graph viscosity per pair (see PAIRS)
    bar_u_pair: tuple         # (bar_ij, bar_ji), each (ny, nx, 6)
    gamma: np.ndarray         # (ny, nx, 4)
    bar_u_elem: np.ndarray    # (ny, nx, 4)
    a: np.ndarray
    lumped: np.ndarray        # m_i, (ny+1, nx+1)
    eps: float
    samples: dict = field(default_factory=dict)
    # high-order parts (None for LO-only assembly)
    qH: Optional[np.ndarray] = None
    F: Optional[FaceField] = None
    udot: Optional[np.ndarray] = None
    f_elem: Optional[np.ndarray] = None
    # nodal fluxes gathered per element, reused by the limiters
    fc: Optional[tuple] = None
    # (min, max) inflow face bar states per (cell, local vertex); +-inf elsewhere
    bar_u_ghost: Optional[tuple] = None


# ---------------------------------------------------------------------------
# boundary data

def face_quadrature_points(mesh: MeshDescriptor, side: str):
    """Coordinates (x, y) of the face quadrature points on one side, each (m, 3)."""
    s = FACE_RULE.points
    if side in ("W", "E"):
        y = mesh.y_min + mesh.hy * (np.arange(mesh.ny)[:, None] + s[None, :])
        x = np.full_like(y, mesh.x_min if side == "W" else mesh.x_max)
    else:
        x = mesh.x_min + mesh.hx * (np.arange(mesh.nx)[:, None] + s[None, :])
        y = np.full_like(x, mesh.y_min if side == "S" else mesh.y_max)
    return x, y


def inflow_samples(problem: ProblemDescriptor, mesh: MeshDescriptor, t: float) -> dict:
    """u_in at the face quadrature points of every inflow side; None on outflow sides."""
    out = {}
    for side in SIDES:
        if problem.is_inflow(side):
            x, y = face_quadrature_points(mesh, side)
            out[side] = np.broadcast_to(np.asarray(problem.inflow_datum(x, y, t), dtype=float), x.shape)
        else:
            out[side] = None
    return out


def _bar_state(problem, uL, uR, n, lam, eps, fL=None, fR=None):
    """(uL+uR)/2 - (f(uR)-f(uL)).n / (2 lam), midpoint where lam vanishes."""
    if fL is None:
        fL = problem.normal_flux(uL, n)
    if fR is None:
        fR = problem.normal_flux(uR, n)
    jump = fR - fL
    safe = np.where(lam > eps, lam, 1.0)
    return np.where(lam > eps, 0.5 * (uL + uR) - 0.5 * jump / safe, 0.5 * (uL + uR))


def _face_area(mesh, axis):
    return mesh.hy if axis == "x" else mesh.hx


# ---------------------------------------------------------------------------
# cell averages

def low_order_cell_rhs(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState,
                       samples: dict | None = None, eps: float | None = None):
    """Finite volume LLF right-hand side q^L with bar states, wave speeds and A_e.

    Returns ``(qL, bar_U, lam, A, H0, left, right)``; the last three are face fields
    of oriented low-order fluxes and the L/R states they were built from.
    """
    if samples is None:
        samples = inflow_samples(problem, mesh, state.t)
    if eps is None:
        eps = EPS_REL * state.scale()
    U = state.U
    ny, nx = U.shape
    left = FaceField(np.empty((ny, nx + 1)), np.empty((ny + 1, nx)))
    right = FaceField(np.empty((ny, nx + 1)), np.empty((ny + 1, nx)))
    left.x[:, 1:] = U
    right.x[:, :-1] = U
    left.y[1:, :] = U
    right.y[:-1, :] = U
    H0 = FaceField(np.empty((ny, nx + 1)), np.empty((ny + 1, nx)))
    lam = FaceField(np.empty((ny, nx + 1)), np.empty((ny + 1, nx)))
    bar = FaceField(np.empty((ny, nx + 1)), np.empty((ny + 1, nx)))

    for axis, n in (("x", X_NORMAL), ("y", Y_NORMAL)):
        inner = (slice(None), slice(1, -1)) if axis == "x" else (slice(1, -1), slice(None))
        uL = getattr(left, axis)[inner]
        uR = getattr(right, axis)[inner]
        lm = problem.wave_speed(uL, uR, n)
        getattr(lam, axis)[inner] = lm
        fL, fR = problem.normal_flux(uL, n), problem.normal_flux(uR, n)
        getattr(H0, axis)[inner] = llf_flux(problem, uL, uR, n, lm, fL, fR)
        getattr(bar, axis)[inner] = _bar_state(problem, uL, uR, n, lm, eps, fL, fR)

    for side in SIDES:
        axis, fidx, cidx, _, _, ghost_left = SIDE_LAYOUT[side]
        n = OUTWARD_NORMALS[side]
        Ue = U[cidx]
        g = samples.get(side)
        fe = problem.normal_flux(Ue, n)
        if g is None:
            lm = np.asarray(problem.wave_speed(Ue, Ue, n), dtype=float)
            h_out = fe
            ub = Ue.copy()
            ghost = Ue.copy()
        else:
            lq = problem.wave_speed(Ue[:, None], g, n)
            fq = llf_flux(problem, Ue[:, None], g, n, lq, fe[:, None])
            h_out = fq @ FACE_RULE.weights
            lm = np.max(lq, axis=1)
            safe = np.where(lm > eps, lm, 1.0)
            ub = np.where(lm > eps, Ue - (h_out - fe) / safe, Ue)
            ghost = g @ FACE_RULE.weights
        sign = -1.0 if ghost_left else 1.0
        getattr(H0, axis)[fidx] = sign * h_out
        getattr(lam, axis)[fidx] = np.broadcast_to(lm, Ue.shape)
        getattr(bar, axis)[fidx] = ub
        getattr(left if ghost_left else right, axis)[fidx] = ghost

    qL = -(mesh.hy * (H0.x[:, 1:] - H0.x[:, :-1]) + mesh.hx * (H0.y[1:, :] - H0.y[:-1, :]))
    A = (mesh.hy * (lam.x[:, 1:] + lam.x[:, :-1])
         + mesh.hx * (lam.y[1:, :] + lam.y[:-1, :])) / mesh.cell_area
    return qL, bar, lam, A, H0, left, right


def _face_traces(u: np.ndarray):
    """u_h at the face quadrature points: x-faces (ny, nx+1, 3), y-faces (ny+1, nx, 3)."""
    s = FACE_RULE.points
    ux = (1.0 - s) * u[:-1, :, None] + s * u[1:, :, None]
    uy = (1.0 - s) * u[:, :-1, None] + s * u[:, 1:, None]
    return ux, uy


def high_order_face_fluxes(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState,
                           samples: dict | None = None) -> FaceField:
    """Face-averaged oriented fluxes H^Q1 from pointwise LLF fluxes of the EG traces."""
    if samples is None:
        samples = inflow_samples(problem, mesh, state.t)
    w = FACE_RULE.weights
    delta = state.delta
    ny, nx = delta.shape
    tx, ty = _face_traces(state.u)
    H1 = FaceField(np.empty((ny, nx + 1)), np.empty((ny + 1, nx)))

    uL = tx[:, 1:-1] + delta[:, :-1, None]
    uR = tx[:, 1:-1] + delta[:, 1:, None]
    H1.x[:, 1:-1] = llf_flux(problem, uL, uR, X_NORMAL) @ w
    uL = ty[1:-1] + delta[:-1, :, None]
    uR = ty[1:-1] + delta[1:, :, None]
    H1.y[1:-1] = llf_flux(problem, uL, uR, Y_NORMAL) @ w

    for side in SIDES:
        axis, fidx, cidx, _, _, ghost_left = SIDE_LAYOUT[side]
        n = OUTWARD_NORMALS[side]
        trace = (tx if axis == "x" else ty)[fidx]
        um = trace + delta[cidx][:, None]
        g = samples.get(side)
        if g is None:
            h_out = problem.normal_flux(um, n) @ w
        else:
            h_out = llf_flux(problem, um, g, n) @ w
        getattr(H1, axis)[fidx] = (-1.0 if ghost_left else 1.0) * h_out
    return H1


def high_order_cell_rhs(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState,
                        samples: dict | None = None, H0: FaceField | None = None):
    """q^H and the raw antidiffusive fluxes F = |S| (H^Q0 - H^Q1)."""
    if samples is None:
        samples = inflow_samples(problem, mesh, state.t)
    if H0 is None:
        H0 = low_order_cell_rhs(problem, mesh, state, samples)[4]
    H1 = high_order_face_fluxes(problem, mesh, state, samples)
    qH = -(mesh.hy * (H1.x[:, 1:] - H1.x[:, :-1]) + mesh.hx * (H1.y[1:, :] - H1.y[:-1, :]))
    F = FaceField(mesh.hy * (H0.x - H1.x), mesh.hx * (H0.y - H1.y))
    return qH, F


def face_divergence(F: FaceField) -> np.ndarray:
    """sum over the faces of each cell of the oriented flux added to that cell."""
    return (F.x[:, 1:] - F.x[:, :-1]) + (F.y[1:, :] - F.y[:-1, :])


def reconstruct_nodal_time_derivative(mesh: MeshDescriptor, qH: np.ndarray) -> np.ndarray:
    """udot_i = sum of q^H over the vertex patch divided by the patch area."""
    return scatter(np.repeat(qH[:, :, None], 4, axis=2)) / patch_areas(mesh)


# ---------------------------------------------------------------------------
# nodal values

def _boundary_nodal_terms(problem, mesh, uc, samples, eps):
    """Lumped boundary terms per (cell, local vertex).

    Returns (rhs, sigma*lambda, sigma*lambda*ubar, (ubar_min, ubar_max)); the last pair
    holds the extreme face bar states ubar_{i,ee'} (+-inf where there is no inflow face).
    """
    ny, nx = uc.shape[:2]
    rhs = np.zeros((ny, nx, 4))
    gam = np.zeros((ny, nx, 4))
    wbar = np.zeros((ny, nx, 4))
    bmin = np.full((ny, nx, 4), np.inf)
    bmax = np.full((ny, nx, 4), -np.inf)
    s = FACE_RULE.points
    w = FACE_RULE.weights
    for side in SIDES:
        g = samples.get(side)
        if g is None:
            # u^+ = u^- on outflow: the lumped boundary term vanishes identically
            continue
        axis, _, cidx, local, _, _ = SIDE_LAYOUT[side]
        n = OUTWARD_NORMALS[side]
        sigma = 0.5 * _face_area(mesh, axis)
        # both local vertices of the side at once: columns follow ``local``
        uhat = 2.0 * (g @ (w[:, None] * np.stack([1.0 - s, s], axis=1)))
        ui = uc[cidx][:, list(local)]
        lm = problem.wave_speed(ui, uhat, n)
        fi, fh = problem.normal_flux(ui, n), problem.normal_flux(uhat, n)
        ub = _bar_state(problem, ui, uhat, n, lm, eps, fi, fh)
        term = -sigma * (llf_flux(problem, ui, uhat, n, lm, fi, fh) - fi)
        for k, loc in enumerate(local):
            view = (cidx[0], cidx[1], loc)
            rhs[view] += term[:, k]
            gam[view] += sigma * lm[:, k]
            wbar[view] += sigma * lm[:, k] * ub[:, k]
            bmin[view] = np.minimum(bmin[view], ub[:, k])
            bmax[view] = np.maximum(bmax[view], ub[:, k])
    return rhs, gam, wbar, (bmin, bmax)


# the six unordered local vertex pairs (i < j); pair arrays have a trailing axis of 6
PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
PAIR_I = np.array([i for i, _ in PAIRS])
PAIR_J = np.array([j for _, j in PAIRS])
# incidence matrices mapping pair values onto their i and j vertices
_INC_I = np.eye(4)[PAIR_I]
_INC_J = np.eye(4)[PAIR_J]
# vertex arrays (..., 4) -> pair arrays (..., 6): x_j - x_i and x_i + x_j
_PAIR_DIFF = (_INC_J - _INC_I).T.copy()
_PAIR_SUM = (_INC_J + _INC_I).T.copy()


def to_vertices(a_i: np.ndarray, a_j: np.ndarray | None = None) -> np.ndarray:
    """Sum pair arrays (..., 6) into vertex arrays (..., 4): a_i onto i, a_j onto j."""
    lead = a_i.shape[:-1]
    out = a_i.reshape(-1, 6) @ _INC_I
    if a_j is not None:
        out += a_j.reshape(-1, 6) @ _INC_J
    return out.reshape(lead + (4,))


def pair_diff(x: np.ndarray) -> np.ndarray:
    """x_j - x_i for the six pairs; exact, since every other weight is zero."""
    return (x.reshape(-1, 4) @ _PAIR_DIFF).reshape(x.shape[:-1] + (6,))


def pair_sum(x: np.ndarray) -> np.ndarray:
    return (x.reshape(-1, 4) @ _PAIR_SUM).reshape(x.shape[:-1] + (6,))


def pair_matrix(ij: np.ndarray, ji: np.ndarray, diag: np.ndarray | None = None) -> np.ndarray:
    """Expand pair arrays into dense (..., 4, 4) local matrices."""
    out = np.zeros(ij.shape[:-1] + (4, 4))
    out[..., PAIR_I, PAIR_J] = ij
    out[..., PAIR_J, PAIR_I] = ji
    if diag is not None:
        k = np.arange(4)
        out[..., k, k] = diag
    return out


def pair_gradients(mesh: MeshDescriptor):
    """c_ij and c_ji for the six pairs, each (6, 2)."""
    c = local_matrices(mesh).gradient
    return c[PAIR_I, PAIR_J], c[PAIR_J, PAIR_I]


def nodal_fluxes(problem: ProblemDescriptor, u: np.ndarray):
    """f(u_i) evaluated once per vertex and gathered to (ny, nx, 4) per component."""
    fx, fy = problem.flux(u)
    return gather(np.broadcast_to(fx, u.shape)), gather(np.broadcast_to(fy, u.shape))


def graph_viscosity(problem: ProblemDescriptor, mesh: MeshDescriptor, uc: np.ndarray,
                    pair_values: tuple | None = None) -> np.ndarray:
    """d^e_ij = max(lambda_ij |c_ij|, lambda_ji |c_ji|) per pair, shape (ny, nx, 6)."""
    ui, uj = (uc[..., PAIR_I], uc[..., PAIR_J]) if pair_values is None else pair_values
    out = None
    for cv, a, b in zip(pair_gradients(mesh), (ui, uj), (uj, ui)):
        norm = np.hypot(cv[:, 0], cv[:, 1])
        dv = problem.wave_speed(a, b, (cv[:, 0] / norm, cv[:, 1] / norm)) * norm
        out = dv if out is None else np.maximum(out, dv)
    return out


def pair_flux_jumps(problem, mesh, uc, fc=None):
    """(f(u_j) - f(u_i)) . c_ij and (f(u_i) - f(u_j)) . c_ji per pair."""
    cij, cji = pair_gradients(mesh)
    fx, fy = problem.flux(uc) if fc is None else fc
    dfx, dfy = pair_diff(fx), pair_diff(fy)
    return dfx * cij[:, 0] + dfy * cij[:, 1], -(dfx * cji[:, 0] + dfy * cji[:, 1])


@lru_cache(maxsize=16)
def _lumped_cached(nx: int, ny: int, lumped: tuple) -> np.ndarray:
    m = scatter(np.broadcast_to(np.array(lumped), (ny, nx, 4)))
    m.flags.writeable = False
    return m


def _lumped_nodal(mesh: MeshDescriptor) -> np.ndarray:
    """Lumped nodal masses m_i (read-only, shared between calls on the same mesh)."""
    return _lumped_cached(mesh.nx, mesh.ny, tuple(local_matrices(mesh).lumped.tolist()))


def low_order_nodal_rhs(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState,
                        samples: dict | None = None, eps: float | None = None, fc=None):
    """Algebraic LLF right-hand side g^L with bar states, gamma_i^e and a_i.

    Returns ``(gL, d, (bar_ij, bar_ji), gamma, bar_u_elem, a, lumped, ghost)`` where
    ``d`` and the pair bar states have a trailing pair axis and ``ghost`` holds the
    extreme inflow face bar states per (cell, local vertex).
    """
    if samples is None:
        samples = inflow_samples(problem, mesh, state.t)
    if eps is None:
        eps = EPS_REL * state.scale()
    lm = local_matrices(mesh)
    uc = gather(state.u)
    if fc is None:
        fc = nodal_fluxes(problem, state.u)
    ui, uj = uc[..., PAIR_I], uc[..., PAIR_J]
    d = graph_viscosity(problem, mesh, uc, (ui, uj))
    cf_ij, cf_ji = pair_flux_jumps(problem, mesh, uc, fc)

    # masking by multiplication: the pair mask alternates along the last axis,
    # where np.where is several times slower; tiny keeps 0.5/d finite
    pos = d > eps
    inv = pos * (0.5 / np.maximum(d, max(eps, np.finfo(float).tiny)))
    mid = 0.5 * (ui + uj)
    bar_ij = mid - cf_ij * inv
    bar_ji = mid - cf_ji * inv
    ddu = d * (uj - ui)
    d2 = 2.0 * d
    # 2 d bar = d (u_i + u_j) - (f_j - f_i).c, without the division
    dsum = d * (ui + uj)
    cf_ij_pos = pos * cf_ij
    cf_ji_pos = pos * cf_ji

    b_rhs, b_gam, b_wbar, ghost = _boundary_nodal_terms(problem, mesh, uc, samples, eps)
    g_elem = b_rhs + to_vertices(ddu - cf_ij, -(ddu + cf_ji))
    gamma = b_gam + to_vertices(d2, d2)
    wsum = b_wbar + to_vertices(dsum - cf_ij_pos, dsum - cf_ji_pos)
    safe = np.where(gamma > eps, gamma, 1.0)
    bar_elem = np.where(gamma > eps, wsum / safe, uc)

    lumped = _lumped_nodal(mesh)
    gL = scatter(g_elem)
    a = scatter(gamma) / lumped
    return gL, d, (bar_ij, bar_ji), gamma, bar_elem, a, lumped, ghost


def raw_element_contributions(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState,
                              udot: np.ndarray, d: np.ndarray | None = None) -> np.ndarray:
    """f_i^e = sum_j [m_ij (udot_i - udot_j) + d_ij (u_i - u_j)] + delta_e int grad phi_i . f'(u_h)."""
    lm = local_matrices(mesh)
    uc = gather(state.u)
    if d is None:
        d = graph_viscosity(problem, mesh, uc)
    vc = gather(udot)
    flow = -d * pair_diff(uc)
    out = lm.lumped * vc - vc @ lm.mass.T + to_vertices(flow, -flow)
    out += state.delta[..., None] * volume_integrals(problem, mesh, state.u)
    return out


def high_order_nodal_rhs(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState,
                         udot: np.ndarray, samples: dict | None = None) -> np.ndarray:
    """g^H assembled directly from the lumped high-order nodal scheme (no splitting)."""
    if samples is None:
        samples = inflow_samples(problem, mesh, state.t)
    lm = local_matrices(mesh)
    uc = gather(state.u)
    vc = gather(udot)
    fx, fy = problem.flux(uc)
    c = lm.gradient
    conv = fx @ c[..., 0].T + fy @ c[..., 1].T
    b_rhs = _boundary_nodal_terms(problem, mesh, uc, samples, EPS_REL * state.scale())[0]
    g = (lm.lumped * vc - vc @ lm.mass.T) - conv + b_rhs
    g += state.delta[..., None] * volume_integrals(problem, mesh, state.u)
    return scatter(g)


# ---------------------------------------------------------------------------

def assemble(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState,
             high_order: bool = True) -> RhsDecomposition:
    """Full algebraic splitting of the EG semi-discretization at ``state``."""
    samples = inflow_samples(problem, mesh, state.t)
    eps = EPS_REL * state.scale()
    qL, bar, lam, A, H0, left, right = low_order_cell_rhs(problem, mesh, state, samples, eps)
    fc = nodal_fluxes(problem, state.u)
    gL, d, bar_pair, gamma, bar_elem, a, lumped, ghost = low_order_nodal_rhs(
        problem, mesh, state, samples, eps, fc)
    rhs = RhsDecomposition(qL=qL, lam=lam, bar_U=bar, left=left, right=right, A=A,
                           gL=gL, d=d, bar_u_pair=bar_pair, gamma=gamma, bar_u_elem=bar_elem,
                           a=a, lumped=lumped, eps=eps, samples=samples, fc=fc, bar_u_ghost=ghost)
    if high_order:
        qH, F = high_order_cell_rhs(problem, mesh, state, samples, H0)
        udot = reconstruct_nodal_time_derivative(mesh, qH)
        rhs.qH = qH
        rhs.F = F
        rhs.udot = udot
        rhs.f_elem = raw_element_contributions(problem, mesh, state, udot, d)
    return rhs
