import numpy as np
import pytest

from egmcl import EGState, build_mesh, get_problem


def random_state(problem, nx, ny, seed, t=0.05):
    """Cell averages and nodal values drawn uniformly from the invariant interval."""
    rng = np.random.default_rng(seed)
    lo, hi = problem.invariant_interval
    return EGState(rng.uniform(lo, hi, (ny, nx)), rng.uniform(lo, hi, (ny + 1, nx + 1)), t)


@pytest.fixture
def unit_mesh():
    return build_mesh((0.0, 1.0, 0.0, 1.0), 1, 1)[0]


@pytest.fixture(params=["advection", "burgers", "kpp-smooth", "kpp-rotational"])
def problem(request):
    return get_problem(request.param)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
