import logging

import numpy as np
import pytest

from egmcl import EGState, TimeLoopConfig, build_mesh, get_problem, heun_step, initial_state, run_transient
from egmcl import timestepping
from egmcl.errors import ConfigurationError, SolverAbort
from egmcl.timestepping import StageReport, cfl_check, forward_euler_stage

from conftest import random_state


def test_cfl_check_examples():
    A = np.array([[0.5, 2.0], [1.0, 1.5]])
    assert cfl_check(A, A, 0.0).ok
    r = cfl_check(A, np.zeros(3), 0.5)
    assert r.ok and r.max_dtA == pytest.approx(1.0)
    r = cfl_check(A, np.zeros(3), 0.75)
    assert not r.cell_ok and r.cell_index == 1 and r.max_dtA == pytest.approx(1.5)


def test_heun_surrogate(monkeypatch):
    # du/dt = a (b - u) with a = b = 1, u = 0, dt = 0.5
    stages = []

    def stage(problem, mesh, state, dt, mode, cfl_policy="warn", check=True, t_next=None, quiet=False):
        new = EGState(state.U + dt * (1.0 - state.U), state.u, state.t + dt)
        stages.append(float(new.U[0, 0]))
        return new, StageReport(cfl=cfl_check(np.zeros(1), np.zeros(1), dt))

    monkeypatch.setattr(timestepping, "forward_euler_stage", stage)
    new, _ = heun_step(None, None, EGState(np.zeros((1, 1)), np.zeros((2, 2))), 0.5, "lo")
    assert stages == [0.5, 0.75]
    assert new.U[0, 0] == pytest.approx(0.375) and new.t == 0.5


def test_full_convex_step_lands_on_bar_state():
    # KPP has lambda = 1 everywhere, so A_e is the same for all cells and dt = 1/A is the CFL limit
    p = get_problem("kpp-rotational")
    mesh = build_mesh(p.domain, 4, 4)[0]
    st_ = random_state(p, 4, 4, 3)
    A = 2 * (mesh.hx + mesh.hy) / mesh.cell_area
    new, rep = forward_euler_stage(p, mesh, st_, 1.0 / A, "bp-es")
    np.testing.assert_allclose(new.U, rep.U_bar_star, atol=1e-13)
    assert rep.cfl.cell_ok and rep.local_violations == 0 and rep.global_violations == 0


@pytest.mark.parametrize("mode", ["lo", "ho", "bp", "bp-es"])
def test_constant_state_unchanged(mode):
    p = get_problem("kpp-smooth")
    mesh = build_mesh(p.domain, 3, 4)[0]
    c = 0.8
    st_ = EGState(np.full((4, 3), c), np.full((5, 4), c), 0.0)
    new, _ = heun_step(p, mesh, st_, 0.01, mode)
    np.testing.assert_allclose(new.U, c, atol=1e-14)
    np.testing.assert_allclose(new.u, c, atol=1e-14)


def test_advection_lo_step_is_idp():
    p = get_problem("advection")
    mesh = build_mesh(p.domain, 4, 4)[0]
    st_ = initial_state(p, mesh)
    res = run_transient(p, mesh, TimeLoopConfig(t_final=0.025, n_steps=1, mode="lo"), state=st_)
    lo, hi = st_.u.min(), st_.u.max()
    assert lo - 1e-14 <= res.state.U.min() and res.state.U.max() <= hi + 1e-14


def test_zero_final_time():
    p = get_problem("advection")
    mesh = build_mesh(p.domain, 2, 2)[0]
    res = run_transient(p, mesh, TimeLoopConfig(t_final=0.0, n_steps=0))
    assert len(res.records) == 1 and res.records[0].step == 0
    np.testing.assert_array_equal(res.state.U, initial_state(p, mesh).U)


def test_config_validation():
    with pytest.raises(ConfigurationError, match="dt"):
        TimeLoopConfig(t_final=1.0, n_steps=10, dt=0.2)
    with pytest.raises(ConfigurationError, match="n_steps"):
        TimeLoopConfig(t_final=1.0, n_steps=0)
    with pytest.raises(ConfigurationError, match="scheme"):
        TimeLoopConfig(t_final=1.0, n_steps=2, mode="weno")
    cfg = TimeLoopConfig.from_dt(1.0, 0.3)
    assert cfg.n_steps == 4 and cfg.dt == pytest.approx(0.25)
    assert TimeLoopConfig.from_dt(0.1, 0.001).n_steps == 100


def test_cfl_assert_policy():
    p = get_problem("kpp-smooth")
    mesh = build_mesh(p.domain, 4, 4)[0]
    cfg = TimeLoopConfig(t_final=2.0, n_steps=1, mode="lo", cfl_policy="assert")
    with pytest.raises(SolverAbort, match="cell"):
        run_transient(p, mesh, cfg)


def test_cfl_warning_once(caplog):
    p = get_problem("kpp-smooth")
    mesh = build_mesh(p.domain, 4, 4)[0]
    A = 2 * (mesh.hx + mesh.hy) / mesh.cell_area
    cfg = TimeLoopConfig(t_final=3 * 1.2 / A, n_steps=3, mode="lo")
    with caplog.at_level(logging.WARNING, logger="egmcl.timestepping"):
        res = run_transient(p, mesh, cfg)
    msgs = [r.getMessage() for r in caplog.records]
    assert sum("CFL condition violated at" in m for m in msgs) == 1
    assert any("6 of 6 stages" in m for m in msgs)
    assert res.total("cfl_violations") == 6


def test_non_finite_abort():
    p = get_problem("kpp-smooth")
    mesh = build_mesh(p.domain, 2, 2)[0]
    st_ = initial_state(p, mesh)
    st_.U[0, 0] = np.nan
    with pytest.raises(SolverAbort) as exc:
        run_transient(p, mesh, TimeLoopConfig(t_final=0.1, n_steps=2, mode="lo"), state=st_)
    assert exc.value.step == 1


def test_observers_and_time_levels():
    p = get_problem("burgers")
    mesh = build_mesh(p.domain, 4, 4)[0]
    seen = []
    cfg = TimeLoopConfig.from_dt(0.03, 0.01, mode="bp-es")
    res = run_transient(p, mesh, cfg, observers=[lambda n, t, rec, st: seen.append((n, t))])
    assert [n for n, _ in seen] == [0, 1, 2, 3]
    assert seen[-1][1] == 0.03 and res.state.t == 0.03
    assert res.total("global_violations") == 0 and res.total("entropy_violations") == 0
