"""Scalar conservation laws, entropy pairs and the LLF Riemann solver.

Every callable on a :class:`ProblemDescriptor` is vectorized: states are numpy
arrays of any shape and vector-valued quantities come back as ``(x, y)``
component tuples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

SIDES = ("W", "E", "S", "N")
OUTWARD_NORMALS = {"W": (-1.0, 0.0), "E": (1.0, 0.0), "S": (0.0, -1.0), "N": (0.0, 1.0)}

# Uniform sampling used by the generic wave-speed estimate.
_OMEGA = np.linspace(0.0, 1.0, 65)
GENERIC_SAFETY = 1.01


class ProblemError(ValueError):
    """Raised for unknown problems or invalid requests (e.g. no exact solution)."""


@dataclass(frozen=True)
class ProblemDescriptor:
    """Flux, entropy pair, data and boundary classification of one problem."""

    name: str
    domain: tuple[float, float, float, float]
    flux: Callable
    flux_jacobian: Callable
    entropy: Callable
    entropy_variable: Callable
    entropy_flux: Callable
    initial_datum: Callable
    invariant_interval: tuple[float, float]
    boundary_kind: dict = field(default_factory=lambda: {s: "outflow" for s in SIDES})
    inflow_datum: Optional[Callable] = None
    closed_form_wave_speed: Optional[Callable] = None
    exact: Optional[Callable] = None
    exact_gradient: Optional[Callable] = None
    # Exact solution depends on x only; lets evaluators skip the y direction.
    exact_is_x_only: bool = False

    def normal_flux(self, u, n):
        fx, fy = self.flux(u)
        if np.isscalar(n[1]) and n[1] == 0:
            return n[0] * fx
        if np.isscalar(n[0]) and n[0] == 0:
            return n[1] * fy
        return n[0] * fx + n[1] * fy

    def wave_speed(self, uL, uR, n):
        return wave_speed_bound(self, uL, uR, n)

    def is_inflow(self, side: str) -> bool:
        return self.boundary_kind.get(side, "outflow") == "inflow"


def generic_wave_speed_bound(problem: ProblemDescriptor, uL, uR, n):
    """Sampled estimate of max |f'(w).n| over w between uL and uR, times 1.01."""
    uL = np.asarray(uL, dtype=float)
    uR = np.asarray(uR, dtype=float)
    w = _OMEGA.reshape((-1,) + (1,) * np.broadcast(uL, uR).ndim)
    states = w * uR + (1.0 - w) * uL
    ax, ay = problem.flux_jacobian(states)
    speed = np.abs(n[0] * np.asarray(ax) + n[1] * np.asarray(ay))
    speed = np.broadcast_to(speed, states.shape)
    return GENERIC_SAFETY * speed.max(axis=0)


def wave_speed_bound(problem: ProblemDescriptor, uL, uR, n):
    """Upper bound for the wave speed of the Riemann problem (uL, uR) along n."""
    if problem.closed_form_wave_speed is not None:
        return problem.closed_form_wave_speed(uL, uR, n)
    return generic_wave_speed_bound(problem, uL, uR, n)


def llf_flux(problem: ProblemDescriptor, uL, uR, n, lam=None, fL=None, fR=None):
    """Local Lax-Friedrichs flux; ``lam`` and the normal fluxes f(u).n may be passed in."""
    if lam is None:
        lam = wave_speed_bound(problem, uL, uR, n)
    if fL is None:
        fL = problem.normal_flux(uL, n)
    if fR is None:
        fR = problem.normal_flux(uR, n)
    return 0.5 * (fR + fL) - 0.5 * lam * (uR - uL)


def entropy_potential(problem: ProblemDescriptor, u):
    v = problem.entropy_variable(u)
    fx, fy = problem.flux(u)
    qx, qy = problem.entropy_flux(u)
    return v * fx - qx, v * fy - qy


def exact_solution(problem: ProblemDescriptor, x, y, t):
    if problem.exact is None:
        raise ProblemError(f"no exact solution is available for problem {problem.name!r}")
    return problem.exact(x, y, t)


# ---------------------------------------------------------------------------
# builtin problems

def _zeros_like(u):
    return np.zeros_like(np.asarray(u, dtype=float))


def _advection() -> ProblemDescriptor:
    def flux(u):
        u = np.asarray(u, dtype=float)
        return u, np.zeros_like(u)

    def jac(u):
        u = np.asarray(u, dtype=float)
        return np.ones_like(u), np.zeros_like(u)

    def speed(uL, uR, n):
        shape = np.broadcast(np.asarray(uL), np.asarray(uR), np.asarray(n[0])).shape
        return np.broadcast_to(np.abs(n[0]), shape).astype(float)

    def exact(x, y, t):
        return np.cos(np.pi * (np.asarray(x, dtype=float) - t))

    def exact_grad(x, y, t):
        gx = -np.pi * np.sin(np.pi * (np.asarray(x, dtype=float) - t))
        return gx, np.zeros_like(gx)

    return ProblemDescriptor(
        name="advection",
        domain=(0.0, 1.0, 0.0, 1.0),
        flux=flux,
        flux_jacobian=jac,
        entropy=lambda u: 0.5 * np.asarray(u) ** 2,
        entropy_variable=lambda u: np.asarray(u, dtype=float),
        entropy_flux=lambda u: (0.5 * np.asarray(u) ** 2, _zeros_like(u)),
        initial_datum=lambda x, y: np.cos(np.pi * np.asarray(x, dtype=float)) + 0.0 * np.asarray(y),
        invariant_interval=(-1.0, 1.0),
        boundary_kind={"W": "inflow", "E": "outflow", "S": "outflow", "N": "outflow"},
        inflow_datum=lambda x, y, t: exact(x, y, t) + 0.0 * np.asarray(y),
        closed_form_wave_speed=speed,
        exact=exact,
        exact_gradient=exact_grad,
        exact_is_x_only=True,
    )


BURGERS_CRITICAL_TIME = 1.0 / (2.0 * np.pi)


def burgers_characteristic_foot(x, t, tol=1e-12, max_iter=200):
    """Solve x0 + u0(x0) t = x for the foot x0 by Newton's method; returns (x0, iterations).

    The derivative 1 + 2 pi t cos(2 pi x0) stays positive for t < t_c.
    """
    x = np.asarray(x, dtype=float)
    x0 = x.copy()
    if t == 0.0:
        return x0, 0
    for it in range(1, max_iter + 1):
        w = 2.0 * np.pi * x0
        step = (x0 + np.sin(w) * t - x) / (1.0 + 2.0 * np.pi * t * np.cos(w))
        x0 = x0 - step
        delta = np.max(np.abs(step)) if step.size else 0.0
        if delta < tol:
            return x0, it
    raise ProblemError(f"characteristic foot did not converge after {max_iter} iterations")


# integer powers written as products: numpy's float power is much slower
def _cube(u):
    u = np.asarray(u, dtype=float)
    return u * u * u


def _burgers_entropy(u):
    u = np.asarray(u, dtype=float)
    u2 = u * u
    return 0.25 * u2 * u2


def _burgers_entropy_flux(u):
    u = np.asarray(u, dtype=float)
    u2 = u * u
    return 0.2 * u2 * u2 * u, np.zeros_like(u)


def _burgers() -> ProblemDescriptor:
    def flux(u):
        u = np.asarray(u, dtype=float)
        return 0.5 * u * u, np.zeros_like(u)

    def jac(u):
        u = np.asarray(u, dtype=float)
        return u.copy(), np.zeros_like(u)

    def speed(uL, uR, n):
        return np.maximum(np.abs(uL), np.abs(uR)) * np.abs(n[0])

    def check_time(t):
        if t >= BURGERS_CRITICAL_TIME:
            raise ProblemError(
                f"Burgers solution has no classical form for t={t} >= t_c={BURGERS_CRITICAL_TIME:.6f}"
            )

    def exact(x, y, t):
        check_time(t)
        x0, _ = burgers_characteristic_foot(x, t)
        return np.sin(2.0 * np.pi * x0)

    def exact_grad(x, y, t):
        check_time(t)
        x0, _ = burgers_characteristic_foot(x, t)
        du0 = 2.0 * np.pi * np.cos(2.0 * np.pi * x0)
        gx = du0 / (1.0 + du0 * t)
        return gx, np.zeros_like(gx)

    return ProblemDescriptor(
        name="burgers",
        domain=(0.0, 1.0, 0.0, 1.0),
        flux=flux,
        flux_jacobian=jac,
        entropy=_burgers_entropy,
        entropy_variable=_cube,
        entropy_flux=_burgers_entropy_flux,
        initial_datum=lambda x, y: np.sin(2.0 * np.pi * np.asarray(x, dtype=float)) + 0.0 * np.asarray(y),
        invariant_interval=(-1.0, 1.0),
        boundary_kind={"W": "inflow", "E": "outflow", "S": "outflow", "N": "outflow"},
        # x = 0 is a stationary characteristic carrying u0(0) = 0.
        inflow_datum=lambda x, y, t: _zeros_like(np.asarray(x) + np.asarray(y)),
        closed_form_wave_speed=speed,
        exact=exact,
        exact_gradient=exact_grad,
        exact_is_x_only=True,
    )


KPP_DOMAIN = (-2.0, 2.0, -2.5, 1.5)


def _kpp(name: str, u0: Callable, interval: tuple[float, float]) -> ProblemDescriptor:
    def flux(u):
        u = np.asarray(u, dtype=float)
        return np.sin(u), np.cos(u)

    def jac(u):
        u = np.asarray(u, dtype=float)
        return np.cos(u), -np.sin(u)

    def speed(uL, uR, n):
        return np.ones(np.broadcast(np.asarray(uL), np.asarray(uR), np.asarray(n[0])).shape)

    def qflux(u):
        u = np.asarray(u, dtype=float)
        return np.cos(u) + u * np.sin(u), -np.sin(u) + u * np.cos(u)

    return ProblemDescriptor(
        name=name,
        domain=KPP_DOMAIN,
        flux=flux,
        flux_jacobian=jac,
        entropy=lambda u: 0.5 * np.asarray(u) ** 2,
        entropy_variable=lambda u: np.asarray(u, dtype=float),
        entropy_flux=qflux,
        initial_datum=u0,
        invariant_interval=interval,
        closed_form_wave_speed=speed,
    )


def _kpp_smooth_u0(x, y):
    r = np.hypot(x, y)
    bump = 0.25 * np.pi * (1.0 + (1.0 + np.cos(np.pi * r)) / 20.0)
    return np.where(r <= 1.0, bump, 0.25 * np.pi)


def _kpp_rotational_u0(x, y):
    r = np.hypot(x, y)
    return np.where(r <= 1.0, 3.5 * np.pi, 0.25 * np.pi)


def get_problem(name: str) -> ProblemDescriptor:
    key = name.strip().lower()
    if key == "advection":
        return _advection()
    if key == "burgers":
        return _burgers()
    if key == "kpp-smooth":
        return _kpp("kpp-smooth", _kpp_smooth_u0, (0.25 * np.pi, 0.25 * np.pi * 1.1))
    if key == "kpp-rotational":
        return _kpp("kpp-rotational", _kpp_rotational_u0, (0.25 * np.pi, 3.5 * np.pi))
    raise ProblemError(f"unknown problem {name!r}; choose from {', '.join(PROBLEM_NAMES)}")


PROBLEM_NAMES = ("advection", "burgers", "kpp-smooth", "kpp-rotational")
