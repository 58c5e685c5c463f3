import numpy as np
import pytest

from emlab.cantor import CantorSpec, build
from emlab.integrands import Integrand
from emlab.mesh import RefinementPolicy, annulus_mesh, generate
from emlab.solver import solve

ANNULUS = (0.25, 1.0)


@pytest.fixture(scope="session")
def tree_m3():
    return build(CantorSpec.constant(2, 0.25, 3))


@pytest.fixture(scope="session")
def cantor_mesh_m3(tree_m3):
    return generate(tree_m3, RefinementPolicy(q_min=4))


@pytest.fixture(scope="session")
def cantor_solutions(tree_m3, cantor_mesh_m3):
    """Converged Cantor solutions at m=3 for p=2 and p=3."""
    out = {}
    for p in (2.0, 3.0):
        f = Integrand("power", p)
        out[p] = (f, solve(cantor_mesh_m3, f))
    return out


@pytest.fixture(scope="session")
def annulus_fine():
    return annulus_mesh(*ANNULUS, 1.0 / 128)


@pytest.fixture(scope="session")
def annulus_solutions(annulus_fine):
    out = {}
    for p in (2.0, 3.0):
        f = Integrand("power", p)
        out[p] = (f, solve(annulus_fine, f))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion, passed, detail):
    """Store one acceptance line; printed in the terminal summary."""
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
