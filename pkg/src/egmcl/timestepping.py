"""Heun (SSP-RK2) time stepping of the limited EG system with stage diagnostics."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import ConfigurationError, SolverAbort
from .fe import CELL_RULE
from .limiters import LimitedCorrections, SchemeMode, apply_scheme_mode, face_states
from .mesh import MeshDescriptor, gather, scatter
from .postprocess import diagnostics
from .problems import ProblemDescriptor
from .semidiscrete import EGState, FaceField, RhsDecomposition, assemble, face_divergence

log = logging.getLogger(__name__)

CFL_SLACK = 1e-12
CHECK_TOL = 1e-12


@dataclass
class TimeLoopConfig:
    """Uniform step Delta t = T / N_T."""

    t_final: float
    n_steps: int
    mode: SchemeMode = SchemeMode.BPES
    cfl_policy: str = "warn"
    dt: Optional[float] = None

    def __post_init__(self):
        self.mode = SchemeMode.parse(self.mode)
        if self.cfl_policy not in ("warn", "assert"):
            raise ConfigurationError(f"cfl_policy: expected 'warn' or 'assert', got {self.cfl_policy!r}")
        if self.t_final < 0 or not math.isfinite(self.t_final):
            raise ConfigurationError(f"t_final: must be finite and >= 0, got {self.t_final}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ConfigurationError(f"n_steps: must be a non-negative integer, got {self.n_steps}")
        self.n_steps = int(self.n_steps)
        if self.n_steps == 0 and self.t_final > 0:
            raise ConfigurationError("n_steps: zero steps requested for a positive final time")
        implied = self.t_final / self.n_steps if self.n_steps else 0.0
        if self.dt is None:
            self.dt = implied
        elif self.n_steps and abs(self.dt * self.n_steps - self.t_final) > 1e-12 * max(1.0, self.t_final):
            raise ConfigurationError(
                f"dt: {self.dt} * {self.n_steps} steps = {self.dt * self.n_steps} does not match t_final={self.t_final}"
            )
        if self.n_steps and not self.dt > 0:
            raise ConfigurationError(f"dt: must be positive, got {self.dt}")

    @classmethod
    def from_dt(cls, t_final: float, dt: float, **kw) -> "TimeLoopConfig":
        """Step count N_T = ceil(T/dt) (up to rounding); dt is then adjusted to T/N_T."""
        if not dt > 0:
            raise ConfigurationError(f"dt: must be positive, got {dt}")
        n = 0 if t_final == 0 else max(1, math.ceil(t_final / dt - 1e-9))
        return cls(t_final=t_final, n_steps=n, **kw)


@dataclass
class CflReport:
    max_dtA: float
    max_dta: float
    cell_index: int
    vertex_index: int
    cell_ok: bool
    vertex_ok: bool

    @property
    def ok(self) -> bool:
        return self.cell_ok and self.vertex_ok


def cfl_check(A: np.ndarray, a: np.ndarray, dt: float) -> CflReport:
    """Largest Delta t A_e and Delta t a_i; pass means <= 1 + 1e-12."""
    dA = dt * np.asarray(A, dtype=float)
    da = dt * np.asarray(a, dtype=float)
    ie, iv = int(np.argmax(dA)), int(np.argmax(da))
    mA, ma = float(dA.ravel()[ie]), float(da.ravel()[iv])
    return CflReport(mA, ma, ie, iv, mA <= 1 + CFL_SLACK, ma <= 1 + CFL_SLACK)


@dataclass
class StageReport:
    cfl: CflReport
    global_violations: int = 0     # U, u outside the invariant interval
    local_violations: int = 0      # limited bar states outside local bounds
    entropy_violations: int = 0    # P > Q after limiting
    max_overshoot: float = 0.0
    # (state, dU, du, rhs) for the bar-state form, evaluated on demand
    _star: Optional[tuple] = field(default=None, repr=False)

    @property
    def U_bar_star(self) -> Optional[np.ndarray]:
        """U + dU/A_e: the state a full convex step dt = 1/A_e would reach."""
        if self._star is None:
            return None
        state, dU, _, rhs = self._star
        ok = rhs.A > rhs.eps
        return np.where(ok, state.U + dU / np.where(ok, rhs.A, 1.0), state.U)

    @property
    def u_bar_star(self) -> Optional[np.ndarray]:
        if self._star is None:
            return None
        state, _, du, rhs = self._star
        ok = rhs.a > rhs.eps
        return np.where(ok, state.u + du / np.where(ok, rhs.a, 1.0), state.u)


@dataclass
class StepRecord:
    step: int
    t: float
    U_min: float
    U_max: float
    u_min: float
    u_max: float
    mass: float
    entropy: float
    max_dtA: float
    max_dta: float
    global_violations: int
    local_violations: int
    entropy_violations: int
    max_overshoot: float
    cfl_violations: int = 0
    errors: Optional[dict] = None


@dataclass
class RunResult:
    state: EGState
    records: list = field(default_factory=list)
    wall_clock: float = 0.0

    def total(self, key: str) -> int:
        return int(sum(getattr(r, key) for r in self.records))


# ---------------------------------------------------------------------------

def initial_state(problem: ProblemDescriptor, mesh: MeshDescriptor) -> EGState:
    """u by vertex interpolation of u0, U by 2x2 Gauss cell averages of u0."""
    xs, ys = mesh.vertex_coordinates()
    X, Y = np.meshgrid(xs, ys)
    u = np.asarray(problem.initial_datum(X, Y), dtype=float) + np.zeros_like(X)
    pts, w = CELL_RULE.points, CELL_RULE.weights
    U = np.zeros(mesh.cell_shape)
    cx = mesh.x_min + mesh.hx * np.arange(mesh.nx)
    cy = mesh.y_min + mesh.hy * np.arange(mesh.ny)
    CX, CY = np.meshgrid(cx, cy)
    for (px, py), wq in zip(pts, w):
        U += wq * np.asarray(problem.initial_datum(CX + px * mesh.hx, CY + py * mesh.hy), dtype=float)
    return EGState(U, u, 0.0)


def _count_outside(x, lo, hi, tol, where=None):
    out = (x < lo - tol) | (x > hi + tol)
    if where is not None:
        out &= where
    return int(np.count_nonzero(out))


def _global_check(U, u, gmin, gmax, tol, extremes=None):
    """(violation count, overshoot) of U and u against the invariant interval.

    Values are only counted when an extreme is outside the interval.
    """
    if extremes is None:
        extremes = (U.min(), U.max(), u.min(), u.max())
    Umin, Umax, umin, umax = extremes
    over = float(max(0.0, Umax - gmax, gmin - Umin, umax - gmax, gmin - umin))
    count = 0
    if over > tol:
        count = _count_outside(U, gmin, gmax, tol) + _count_outside(u, gmin, gmax, tol)
    return count, over


def _limited_bar_states(mesh, rhs: RhsDecomposition, lim: LimitedCorrections):
    """Per-face Ubar + F*/(|S| lambda) for both orientations (NaN where lambda vanishes)."""
    out = {}
    for axis, area in (("x", mesh.hy), ("y", mesh.hx)):
        lam = getattr(rhs.lam, axis)
        bar = getattr(rhs.bar_U, axis)
        F = getattr(lim.F, axis)
        ok = lam > rhs.eps
        shift = np.where(ok, F / (area * np.where(ok, lam, 1.0)), 0.0)
        out[axis] = (bar + shift, bar - shift, ok)
    return out


def _stage_checks(problem, mesh, state, rhs, lim, mode, tol):
    """Local-bound and entropy violation counts of the limited corrections."""
    local = 0
    entropy = 0
    if lim.bounds is not None:
        b = lim.bounds
        bars = _limited_bar_states(mesh, rhs, lim)
        for axis in ("x", "y"):
            plus, minus, ok = bars[axis]
            # plus belongs to L, minus to R
            lead = (slice(None), slice(1, None)) if axis == "x" else (slice(1, None), slice(None))
            trail = (slice(None), slice(None, -1)) if axis == "x" else (slice(None, -1), slice(None))
            local += _count_outside(plus[lead], b.U_min, b.U_max, tol, ok[lead])
            local += _count_outside(minus[trail], b.U_min, b.U_max, tol, ok[trail])
        act = rhs.gamma >= rhs.eps
        star = rhs.bar_u_elem + np.where(act, lim.f / np.where(act, rhs.gamma, 1.0), 0.0)
        local += _count_outside(star, gather(b.u_min), gather(b.u_max), tol, act)
    if mode is SchemeMode.BPES and lim.budget is not None:
        bud = lim.budget
        for axis in ("x", "y"):
            UL, UR = face_states(rhs, axis)
            P = (problem.entropy_variable(UL) - problem.entropy_variable(UR)) * getattr(lim.F, axis)
            entropy += int(np.count_nonzero(P > getattr(bud.Q_face, axis) + tol))
        v = bud.v_elem if bud.v_elem is not None else problem.entropy_variable(gather(state.u))
        P = (v - bud.vbar[..., None]) * lim.f
        entropy += int(np.count_nonzero(P > bud.Q_elem + tol))
    return local, entropy


def forward_euler_stage(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState, dt: float,
                        mode, cfl_policy: str = "warn", check: bool = True,
                        t_next: float | None = None, quiet: bool = False):
    """One limited forward Euler step; returns (new state, StageReport).

    ``quiet`` suppresses the CFL warning (the violation is still reported).

    The update is the direct right-hand side form, which is algebraically the
    bar-state form U + dt A (U* - U), u + dt a (u* - u).
    """
    mode = SchemeMode.parse(mode)
    rhs = assemble(problem, mesh, state, high_order=mode is not SchemeMode.LO)
    cfl = cfl_check(rhs.A, rhs.a, dt)
    if not cfl.ok:
        msg = (f"CFL condition violated at t={state.t:.6g}: max dt*A_e={cfl.max_dtA:.6g} (cell {cfl.cell_index}), "
               f"max dt*a_i={cfl.max_dta:.6g} (vertex {cfl.vertex_index})")
        if cfl_policy == "assert":
            raise SolverAbort(msg)
        if not quiet:
            log.warning(msg)
    lim = apply_scheme_mode(mode, problem, mesh, state, rhs)

    dU = (rhs.qL + face_divergence(lim.F)) / mesh.cell_area
    du = (rhs.gL + scatter(lim.f)) / rhs.lumped
    U_new = state.U + dt * dU
    u_new = state.u + dt * du
    new = EGState(U_new, u_new, state.t + dt if t_next is None else t_next)

    report = StageReport(cfl=cfl)
    if check:
        tol = CHECK_TOL * state.scale()
        gmin, gmax = problem.invariant_interval
        report.global_violations, report.max_overshoot = _global_check(U_new, u_new, gmin, gmax, tol)
        report.local_violations, report.entropy_violations = _stage_checks(
            problem, mesh, state, rhs, lim, mode, tol)
        report._star = (state, dU, du, rhs)
    return new, report


def heun_step(problem: ProblemDescriptor, mesh: MeshDescriptor, state: EGState, dt: float, mode,
              cfl_policy: str = "warn", check: bool = True, quiet: bool = False):
    """SSP-RK2: two limited Euler stages then averaging; returns (new state, [stage reports])."""
    s1, r1 = forward_euler_stage(problem, mesh, state, dt, mode, cfl_policy, check, quiet=quiet)
    s2, r2 = forward_euler_stage(problem, mesh, s1, dt, mode, cfl_policy, check, quiet=quiet or not r1.cfl.ok)
    new = EGState(0.5 * (state.U + s2.U), 0.5 * (state.u + s2.u), state.t + dt)
    return new, [r1, r2]


Observer = Callable[[int, float, StepRecord, EGState], None]


def run_transient(problem: ProblemDescriptor, mesh: MeshDescriptor, config: TimeLoopConfig,
                  state: EGState | None = None, observers: Iterable[Observer] = (),
                  error_fn: Callable | None = None, check: bool = True) -> RunResult:
    """Advance ``config.n_steps`` Heun steps; observers see every step (and step 0).

    ``error_fn(state) -> dict`` adds per-step error norms to the records.
    """
    if state is None:
        state = initial_state(problem, mesh)
    observers = list(observers)
    start = time.perf_counter()
    result = RunResult(state=state)

    def record(step, st, reports):
        dg = diagnostics(problem, mesh, st)
        gmin, gmax = problem.invariant_interval
        tol = CHECK_TOL * st.scale()
        gv, over = _global_check(st.U, st.u, gmin, gmax, tol,
                                 (dg["U_min"], dg["U_max"], dg["u_min"], dg["u_max"]))
        rec = StepRecord(
            step=step, t=st.t, U_min=dg["U_min"], U_max=dg["U_max"], u_min=dg["u_min"], u_max=dg["u_max"],
            mass=dg["mass"], entropy=dg["entropy"],
            max_dtA=max((r.cfl.max_dtA for r in reports), default=0.0),
            max_dta=max((r.cfl.max_dta for r in reports), default=0.0),
            global_violations=gv + sum(r.global_violations for r in reports),
            local_violations=sum(r.local_violations for r in reports),
            entropy_violations=sum(r.entropy_violations for r in reports),
            max_overshoot=max([r.max_overshoot for r in reports] + [over]),
            cfl_violations=sum(not r.cfl.ok for r in reports),
            errors=error_fn(st) if error_fn is not None else None,
        )
        result.records.append(rec)
        for obs in observers:
            obs(step, st.t, rec, st)

    record(0, state, [])
    dt = config.dt
    warned = False  # warn on the first CFL violation only, summarize at the end
    for n in range(1, config.n_steps + 1):
        state, reports = heun_step(problem, mesh, state, dt, config.mode, config.cfl_policy, check, quiet=warned)
        warned = warned or any(not r.cfl.ok for r in reports)
        # avoid drift in t from repeated addition
        state.t = n * dt if n < config.n_steps else config.t_final
        if not (np.all(np.isfinite(state.U)) and np.all(np.isfinite(state.u))):
            raise SolverAbort(f"non-finite values detected at step {n} (t={state.t:.6g})", step=n)
        record(n, state, reports)
    if warned:
        log.warning("CFL condition violated in %d of %d stages", result.total("cfl_violations"),
                    2 * config.n_steps)
    result.state = state
    result.wall_clock = time.perf_counter() - start
    return result
