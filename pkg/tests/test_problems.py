import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egmcl.problems import (BURGERS_CRITICAL_TIME, PROBLEM_NAMES, ProblemError, burgers_characteristic_foot,
                            entropy_potential, exact_solution, get_problem, llf_flux, wave_speed_bound,
                            generic_wave_speed_bound)


def test_llf_examples():
    assert llf_flux(get_problem("burgers"), 0.0, 1.0, (1.0, 0.0)) == pytest.approx(-0.25)
    assert llf_flux(get_problem("advection"), 2.0, 0.0, (1.0, 0.0)) == pytest.approx(2.0)


def test_wave_speed_examples():
    assert wave_speed_bound(get_problem("burgers"), -3.0, 2.0, (1.0, 0.0)) == pytest.approx(3.0)
    kpp = get_problem("kpp-rotational")
    assert np.all(wave_speed_bound(kpp, np.array([0.3, 7.0]), np.array([9.0, -1.0]), (0.6, 0.8)) == 1.0)


@pytest.mark.parametrize("name", PROBLEM_NAMES)
def test_consistency_and_degenerate_speed(name):
    p = get_problem(name)
    lo, hi = p.invariant_interval
    u = np.linspace(lo, hi, 7)
    n = (0.6, -0.8)
    np.testing.assert_allclose(llf_flux(p, u, u, n), p.normal_flux(u, n), atol=1e-14)
    ax, ay = p.flux_jacobian(u)
    assert np.all(p.wave_speed(u, u, n) >= np.abs(n[0] * ax + n[1] * ay) - 1e-14)


@pytest.mark.parametrize("name", ["advection", "burgers"])
def test_closed_form_speed_bounds_sampled_speed(name):
    p = get_problem(name)
    rng = np.random.default_rng(3)
    uL, uR = rng.uniform(-1, 1, 50), rng.uniform(-1, 1, 50)
    n = (0.8, 0.6)
    generic = generic_wave_speed_bound(p, uL, uR, n) / 1.01
    assert np.all(p.wave_speed(uL, uR, n) >= generic - 1e-12)


@given(st.sampled_from(PROBLEM_NAMES), st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 2 * np.pi))
@settings(max_examples=100, deadline=None)
def test_llf_antisymmetry(name, a, b, theta):
    p = get_problem(name)
    n = (np.cos(theta), np.sin(theta))
    m = (-n[0], -n[1])
    assert llf_flux(p, a, b, n) == pytest.approx(-llf_flux(p, b, a, m), abs=1e-12)


def test_entropy_potential_examples():
    psi = entropy_potential(get_problem("advection"), 3.0)
    assert psi[0] == pytest.approx(4.5) and psi[1] == 0
    psi = entropy_potential(get_problem("burgers"), 1.0)
    assert psi[0] == pytest.approx(0.3) and psi[1] == 0


@pytest.mark.parametrize("name", PROBLEM_NAMES)
def test_entropy_pair_finite_differences(name):
    # v = eta' and q' = v f' checked by central differences
    p = get_problem(name)
    lo, hi = p.invariant_interval
    u = np.linspace(lo - 0.5, hi + 0.5, 11)
    h = 1e-5
    deta = (p.entropy(u + h) - p.entropy(u - h)) / (2 * h)
    np.testing.assert_allclose(deta, p.entropy_variable(u), atol=1e-6)
    qp, qm = p.entropy_flux(u + h), p.entropy_flux(u - h)
    ax, ay = p.flux_jacobian(u)
    v = p.entropy_variable(u)
    np.testing.assert_allclose((qp[0] - qm[0]) / (2 * h), v * ax, atol=1e-6)
    np.testing.assert_allclose((qp[1] - qm[1]) / (2 * h), v * ay, atol=1e-6)


def test_exact_solutions():
    adv = get_problem("advection")
    assert exact_solution(adv, 0.5, 0.3, 0.5) == pytest.approx(1.0)
    burg = get_problem("burgers")
    x = np.linspace(0, 1, 9)
    np.testing.assert_array_equal(exact_solution(burg, x, 0 * x, 0.0), np.sin(2 * np.pi * x))
    assert burgers_characteristic_foot(x, 0.0)[1] == 0
    with pytest.raises(ProblemError):
        exact_solution(burg, x, 0 * x, BURGERS_CRITICAL_TIME)
    with pytest.raises(ProblemError):
        exact_solution(get_problem("kpp-smooth"), 0.0, 0.0, 0.0)


def test_burgers_exact_satisfies_characteristics():
    burg = get_problem("burgers")
    t = 0.1
    x = np.linspace(0, 1, 33)
    x0, _ = burgers_characteristic_foot(x, t)
    u = exact_solution(burg, x, 0 * x, t)
    np.testing.assert_allclose(x0 + u * t, x, atol=1e-11)


def test_characteristic_solver_failure_reports_iterations():
    with pytest.raises(ProblemError, match="3 iterations"):
        burgers_characteristic_foot(np.linspace(0, 1, 5), 0.15, tol=1e-30, max_iter=3)


def test_unknown_problem():
    with pytest.raises(ProblemError):
        get_problem("euler")


def test_boundary_classification():
    adv = get_problem("advection")
    assert adv.is_inflow("W") and not adv.is_inflow("E")
    assert not any(get_problem("kpp-smooth").is_inflow(s) for s in "WESN")
