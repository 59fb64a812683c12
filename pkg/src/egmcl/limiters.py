"""Monolithic convex limiting with entropy fixes for both EG subproblems.

Cell averages: each face flux F (added to the L cell) is clipped so that the
limited bar states of both neighbours stay within local bounds, then optionally
scaled by an entropy-fix factor. CG nodal values: element contributions are
pre-limited by an entropy factor, clipped against nodal bounds and rescaled to
restore their zero sum.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .mesh import MeshDescriptor, corner_extreme, gather, patch_extreme, scatter_extreme
from .problems import ProblemDescriptor, entropy_potential
from .semidiscrete import (SIDE_LAYOUT, X_NORMAL, Y_NORMAL, EGState, FaceField,
                           RhsDecomposition, pair_diff, pair_gradients, pair_sum, to_vertices)


class SchemeMode(str, Enum):
    LO = "lo"
    HO = "ho"
    BP = "bp"
    BPES = "bp-es"

    @classmethod
    def parse(cls, value) -> "SchemeMode":
        if isinstance(value, SchemeMode):
            return value
        key = str(value).strip().lower()
        for m in cls:
            if m.value == key:
                return m
        raise ConfigurationError(
            f"scheme: unknown mode {value!r}; choose from {', '.join(m.value for m in cls)}"
        )

    @property
    def bounded(self) -> bool:
        return self in (SchemeMode.LO, SchemeMode.BP, SchemeMode.BPES)

    @property
    def entropy_stable(self) -> bool:
        return self in (SchemeMode.LO, SchemeMode.BPES)


@dataclass
class LocalBounds:
    U_min: np.ndarray  # (ny, nx)
    U_max: np.ndarray
    u_min: Optional[np.ndarray] = None  # (ny+1, nx+1)
    u_max: Optional[np.ndarray] = None


@dataclass
class EntropyBudget:
    P_face: Optional[FaceField] = None
    Q_face: Optional[FaceField] = None
    P_elem: Optional[np.ndarray] = None
    Q_elem: Optional[np.ndarray] = None
    vbar: Optional[np.ndarray] = None
    v_elem: Optional[np.ndarray] = None    # v(u_i) gathered per element


@dataclass
class LimitedCorrections:
    F: FaceField             # F*_ee' per face
    f: np.ndarray            # f_i^{e,*}, (ny, nx, 4)
    bounds: Optional[LocalBounds] = None
    budget: Optional[EntropyBudget] = None
    F_bp: Optional[FaceField] = None
    alpha_face: Optional[FaceField] = None
    alpha_elem: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# cell averages

def cell_local_bounds(mesh: MeshDescriptor, state: EGState, samples: dict | None = None):
    """U_e^min, U_e^max from patch cell averages, vertex values and inflow samples."""
    U, u = state.U, state.u
    vmax = np.maximum(patch_extreme(U, np.maximum), u)
    vmin = np.minimum(patch_extreme(U, np.minimum), u)
    cmax = corner_extreme(vmax, np.maximum)
    cmin = corner_extreme(vmin, np.minimum)
    for side, g in (samples or {}).items():
        if g is None:
            continue
        cidx = SIDE_LAYOUT[side][2]
        cmax[cidx] = np.maximum(cmax[cidx], g.max(axis=1))
        cmin[cidx] = np.minimum(cmin[cidx], g.min(axis=1))
    return cmin, cmax


def mcl_flux_limit(F, bar, lam, area, Umax_L, Umin_L, Umax_R, Umin_R, eps=0.0):
    """Bound-preserving flux F^BP for a face whose flux F is added to L.

    Headrooms are clamped at zero so that rounding can never flip the sign of F.
    """
    F = np.asarray(F, dtype=float)
    cap = area * np.asarray(lam, dtype=float)
    up = np.maximum(0.0, np.minimum(Umax_L - bar, bar - Umin_R))
    down = np.minimum(0.0, np.maximum(Umin_L - bar, bar - Umax_R))
    # up >= 0 >= down, so clipping to [cap*down, cap*up] only ever shrinks |F|
    out = np.minimum(np.maximum(F, cap * down), cap * up)
    return np.where(cap > eps * area, out, 0.0)


def _pad_bounds(cmin, cmax, axis):
    """Per-face (Umax_L, Umin_L, Umax_R, Umin_R) with +-inf on the ghost side."""
    ny, nx = cmin.shape
    shape = (ny, nx + 1) if axis == "x" else (ny + 1, nx)
    Lmax, Rmax = np.full(shape, np.inf), np.full(shape, np.inf)
    Lmin, Rmin = np.full(shape, -np.inf), np.full(shape, -np.inf)
    if axis == "x":
        Lmax[:, 1:], Lmin[:, 1:] = cmax, cmin
        Rmax[:, :-1], Rmin[:, :-1] = cmax, cmin
    else:
        Lmax[1:], Lmin[1:] = cmax, cmin
        Rmax[:-1], Rmin[:-1] = cmax, cmin
    return Lmax, Lmin, Rmax, Rmin


def limit_face_fluxes(mesh: MeshDescriptor, rhs: RhsDecomposition, F: FaceField,
                      U_min: np.ndarray, U_max: np.ndarray) -> FaceField:
    out = []
    for axis, area in (("x", mesh.hy), ("y", mesh.hx)):
        Lmax, Lmin, Rmax, Rmin = _pad_bounds(U_min, U_max, axis)
        out.append(mcl_flux_limit(getattr(F, axis), getattr(rhs.bar_U, axis), getattr(rhs.lam, axis),
                                  area, Lmax, Lmin, Rmax, Rmin, rhs.eps))
    return FaceField(*out)


def face_entropy_budget(problem: ProblemDescriptor, UL, UR, lam, area, n):
    """Q_ee' = Q^+ + min(0, Q^-) for faces oriented from L to R, clamped at zero."""
    vL, vR = problem.entropy_variable(UL), problem.entropy_variable(UR)
    dv = vR - vL
    q_plus = area * dv * 0.5 * lam * (UR - UL)
    psiL, psiR = entropy_potential(problem, UL), entropy_potential(problem, UR)
    fL, fR = problem.flux(UL), problem.flux(UR)
    q_minus = area * sum(n[k] * ((psiR[k] - psiL[k]) - dv * 0.5 * (fR[k] + fL[k])) for k in range(2))
    return np.maximum(q_plus + np.minimum(0.0, q_minus), 0.0)


def entropy_fix_flux(problem: ProblemDescriptor, UL, UR, F_bp, lam, area, n):
    """Return (F*, alpha, P, Q) with P = (v(U_L) - v(U_R)) F^BP the entropy production of F."""
    P = (problem.entropy_variable(UL) - problem.entropy_variable(UR)) * F_bp
    Q = face_entropy_budget(problem, UL, UR, lam, area, n)
    safe = np.where(P > Q, P, 1.0)
    alpha = np.where(P > Q, Q / safe, 1.0)
    return alpha * F_bp, alpha, P, Q


# ---------------------------------------------------------------------------
# nodal values

def nodal_local_bounds(u: np.ndarray, bar_u_elem: np.ndarray, gamma: np.ndarray, eps: float = 0.0,
                       ghost: tuple | None = None):
    """u_i^min, u_i^max over u_i and the bar states of cells with gamma_i^e >= eps.

    ``ghost`` = (min, max) of the inflow face bar states per (cell, local vertex): the
    ghost cells at a boundary vertex count among its cells, with the face bar state
    as their bar state. Without them an inflow vertex cannot follow its boundary data.
    """
    active = gamma >= eps
    hi = np.where(active, bar_u_elem, -np.inf)
    lo = np.where(active, bar_u_elem, np.inf)
    if ghost is not None:
        lo, hi = np.minimum(lo, ghost[0]), np.maximum(hi, ghost[1])
    umax = np.maximum(u, scatter_extreme(hi, np.maximum))
    umin = np.minimum(u, scatter_extreme(lo, np.minimum))
    return umin, umax


def element_entropy_budget(problem: ProblemDescriptor, mesh: MeshDescriptor, u: np.ndarray, d: np.ndarray):
    """Q_i^e = sum_{j != i} [Q^+_ij + min(0, Q^-_ij)], clamped at zero.

    ``u`` holds the nodal values (ny+1, nx+1); returns (Q, v_i per element, v-bar_e).
    """
    cij, cji = pair_gradients(mesh)
    v = problem.entropy_variable(u)
    fx, fy = problem.flux(u)
    qx, qy = problem.entropy_flux(u)
    vc = gather(v)
    psix, psiy = gather(v * fx - qx), gather(v * fy - qy)
    fx, fy = gather(np.broadcast_to(fx, u.shape)), gather(np.broadcast_to(fy, u.shape))
    dv = pair_diff(vc)
    q_plus = dv * 0.5 * d * pair_diff(gather(u))
    # antisymmetric vector (psi_j - psi_i) - (v_j - v_i)(f_j + f_i)/2
    ax = pair_diff(psix) - dv * 0.5 * pair_sum(fx)
    ay = pair_diff(psiy) - dv * 0.5 * pair_sum(fy)
    Q = to_vertices(q_plus + np.minimum(0.0, ax * cij[:, 0] + ay * cij[:, 1]),
                    q_plus + np.minimum(0.0, -(ax * cji[:, 0] + ay * cji[:, 1])))
    return np.maximum(Q, 0.0), vc, vc.mean(axis=-1)


def clip_and_scale(f, gamma, bar_u_elem, umin_e, umax_e, alpha=None, eps=0.0):
    """Clip alpha*f against gamma(u^max - ubar), gamma(u^min - ubar), then restore the zero sum."""
    f = np.asarray(f, dtype=float)
    af = f if alpha is None else alpha * f
    up = np.maximum(0.0, gamma * (umax_e - bar_u_elem))
    down = np.minimum(0.0, gamma * (umin_e - bar_u_elem))
    # alpha >= 0 keeps the sign of f, and up >= 0 >= down
    ft = np.where(gamma >= eps, np.minimum(np.maximum(af, down), up), 0.0)
    pos, neg = np.maximum(ft, 0.0), np.minimum(ft, 0.0)
    fp = pos.sum(axis=-1, keepdims=True)
    fm = neg.sum(axis=-1, keepdims=True)
    s = fp + fm
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink_pos = np.where(s > 0, -fm / np.where(fp > 0, fp, 1.0), 1.0)
        shrink_neg = np.where(s < 0, -fp / np.where(fm < 0, fm, -1.0), 1.0)
    return shrink_pos * pos + shrink_neg * neg


def entropic_clip_and_scale(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState,
                            f_elem, gamma, bar_u_elem, umin, umax, d, eps=0.0, entropy=True):
    """Element limiter; returns (f*, alpha, P, Q, v, vbar). alpha is None without the entropy stage."""
    alpha = P = Q = v = vbar = None
    if entropy:
        Q, v, vbar = element_entropy_budget(problem, mesh, state.u, d)
        P = (v - vbar[..., None]) * f_elem
        safe = np.where(P > Q, P, 1.0)
        alpha = np.where(P > Q, Q / safe, 1.0)
    out = clip_and_scale(f_elem, gamma, bar_u_elem, gather(umin), gather(umax), alpha, eps)
    return out, alpha, P, Q, v, vbar


# ---------------------------------------------------------------------------

def face_states(rhs: RhsDecomposition, axis: str):
    return getattr(rhs.left, axis), getattr(rhs.right, axis)


def apply_scheme_mode(mode, problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState,
                      rhs: RhsDecomposition) -> LimitedCorrections:
    """Limited corrections F*, f* for the selected scheme mode."""
    mode = SchemeMode.parse(mode)
    ny, nx = state.U.shape
    if mode is SchemeMode.LO:
        return LimitedCorrections(FaceField(np.zeros((ny, nx + 1)), np.zeros((ny + 1, nx))),
                                  np.zeros((ny, nx, 4)))
    if rhs.F is None or rhs.f_elem is None:
        raise ValueError("high-order assembly is required for modes other than LO")
    if mode is SchemeMode.HO:
        return LimitedCorrections(FaceField(rhs.F.x.copy(), rhs.F.y.copy()), rhs.f_elem.copy())

    entropy = mode is SchemeMode.BPES
    U_min, U_max = cell_local_bounds(mesh, state, rhs.samples)
    F_bp = limit_face_fluxes(mesh, rhs, rhs.F, U_min, U_max)
    if entropy:
        fixed = {}
        for axis, area, n in (("x", mesh.hy, X_NORMAL), ("y", mesh.hx, Y_NORMAL)):
            UL, UR = face_states(rhs, axis)
            fixed[axis] = entropy_fix_flux(problem, UL, UR, getattr(F_bp, axis), getattr(rhs.lam, axis), area, n)
        F_star = FaceField(fixed["x"][0], fixed["y"][0])
        alpha_face = FaceField(fixed["x"][1], fixed["y"][1])
        budget = EntropyBudget(P_face=FaceField(fixed["x"][2], fixed["y"][2]),
                               Q_face=FaceField(fixed["x"][3], fixed["y"][3]))
    else:
        F_star, alpha_face, budget = F_bp, None, EntropyBudget()

    umin, umax = nodal_local_bounds(state.u, rhs.bar_u_elem, rhs.gamma, rhs.eps, rhs.bar_u_ghost)
    f_star, alpha, P, Q, v, vbar = entropic_clip_and_scale(
        problem, mesh, state, rhs.f_elem, rhs.gamma, rhs.bar_u_elem, umin, umax, rhs.d,
        eps=rhs.eps, entropy=entropy)
    budget.P_elem, budget.Q_elem, budget.v_elem, budget.vbar = P, Q, v, vbar
    return LimitedCorrections(F=F_star, f=f_star, bounds=LocalBounds(U_min, U_max, umin, umax),
                              budget=budget, F_bp=F_bp, alpha_face=alpha_face, alpha_elem=alpha)
