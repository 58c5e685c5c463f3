import math

import numpy as np
import pytest
import scipy.sparse as sp

from emlab.cantor import CantorSpec, build
from emlab.errors import InvalidArgument, SolverFailure, StructuralError
from emlab.fem import FESpace
from emlab.integrands import Integrand
from emlab.linsolve import NegativeCurvature, pcg, solve_spd, make_preconditioner
from emlab.mesh import INNER, RefinementPolicy, annulus_mesh, generate
from emlab.solver import DirichletSpec, EpsLadder, SolverOptions, flux_pairing, solve

R_IN, R_OUT = 0.25, 1.0


def radial_exact(p, rho):
    """Radial p-harmonic profile with u(R_IN)=0, u(R_OUT)=1 in the plane."""
    if p == 2:
        return np.log(rho / R_IN) / math.log(R_OUT / R_IN)
    k = (p - 2) / (p - 1)
    return (rho ** k - R_IN ** k) / (R_OUT ** k - R_IN ** k)


@pytest.fixture(scope="module")
def small_cantor():
    t = build(CantorSpec.constant(2, 0.25, 1))
    return t, generate(t, RefinementPolicy(q_min=2))


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_annulus_matches_radial_profile(annulus_solutions, p):
    f, sol = annulus_solutions[p]
    assert sol.converged
    rho = np.linalg.norm(sol.mesh.vertices, axis=1)
    err = np.abs(sol.u - radial_exact(p, rho)).max()
    assert err <= 0.02


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_annulus_uniform_radii_second_order(p):
    # without ring similarity the nodal error is genuine and shrinks like h^2
    errs = []
    for h in (1 / 16, 1 / 32):
        mesh = annulus_mesh(R_IN, R_OUT, h, radii="uniform")
        sol = solve(mesh, Integrand("power", p))
        rho = np.linalg.norm(mesh.vertices, axis=1)
        errs.append(np.abs(sol.u - radial_exact(p, rho)).max())
    assert 1e-8 < errs[1] < errs[0] <= 0.02
    assert errs[0] / errs[1] > 3.0


def test_annulus_p3_profile_closed_form():
    # k = 1/2 for p = 3: u = (sqrt(rho) - 1/2) / (1 - 1/2)
    rho = np.array([0.25, 0.5, 1.0])
    assert np.allclose(radial_exact(3.0, rho), (np.sqrt(rho) - 0.5) / 0.5)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_linear_data_reproduced_exactly(small_cantor, p):
    _, mesh = small_cantor
    a = np.array([0.3, -0.7])
    values = mesh.vertices @ a + 0.1
    sol = solve(mesh, Integrand("power", p), DirichletSpec(values=values))
    assert np.allclose(sol.u, values, atol=1e-9)


def test_maximum_principle(cantor_solutions):
    for p, (f, sol) in cantor_solutions.items():
        assert sol.converged
        assert sol.u_min >= -1e-10 and sol.u_max <= 1 + 1e-10


def test_boundary_values_respected(cantor_solutions):
    _, sol = cantor_solutions[3.0]
    tags = sol.mesh.tags
    assert np.all(sol.u[tags == INNER] == 0.0)
    assert np.all(sol.u[tags == 1] == 1.0)


def test_ladder_trace(cantor_solutions):
    _, sol = cantor_solutions[3.0]
    rungs = [r for r in sol.trace if r["stage"] == "rung"]
    eps = [r["eps"] for r in rungs]
    assert eps[0] == 1.0 and all(b < a for a, b in zip(eps, eps[1:]))
    assert eps[-1] == pytest.approx(1e-8 * sol.max_grad, rel=0.5)
    for r in rungs:
        assert all(b <= a + 1e-12 * abs(a) for a, b in zip(r["energies"], r["energies"][1:]))
    assert sol.residual <= 1e-10


def test_quadratic_skips_ladder(cantor_solutions):
    _, sol = cantor_solutions[2.0]
    assert [r["stage"] for r in sol.trace] == ["laplace", "exact"]


def test_residual_bounds_free_pairing(cantor_solutions, rng):
    f, sol = cantor_solutions[3.0]
    phi = rng.uniform(-1, 1, sol.mesh.num_vertices) * sol.space.free
    assert abs(flux_pairing(sol, f, phi)) <= sol.residual * (1 + 1e-9)


def test_energy_minimal_against_perturbations(cantor_solutions, rng):
    f, sol = cantor_solutions[3.0]
    space = sol.space
    for _ in range(3):
        d = rng.standard_normal(sol.mesh.num_vertices) * space.free * 1e-3
        G = space.gradients(sol.u + d)
        E = float(sol.final.batch(G, order=0)[0] @ space.vol)
        assert E >= sol.energy - 1e-12


def test_solver_failure_carries_trace(small_cantor):
    _, mesh = small_cantor
    opts = SolverOptions(max_iter=1, max_restarts=0, eps_ladder=EpsLadder(eps0=1.0))
    with pytest.raises(SolverFailure) as exc:
        solve(mesh, Integrand("power", 3.0), opts=opts)
    assert exc.value.trace


def test_space_mismatch(small_cantor):
    _, mesh = small_cantor
    other = annulus_mesh(0.25, 1.0, 1 / 16)
    with pytest.raises(InvalidArgument):
        solve(mesh, Integrand("power", 2.0), space=FESpace(other))


@pytest.mark.parametrize("kw", [dict(tol_newton=0), dict(max_iter=0), dict(cg_tol=2), dict(preconditioner="x")])
def test_option_validation(kw):
    with pytest.raises(InvalidArgument):
        SolverOptions(**kw)


@pytest.mark.parametrize("kw", [dict(eps0=0), dict(factor=1.0), dict(eps_final=-1.0), dict(eps_final_rel=0)])
def test_ladder_validation(kw):
    with pytest.raises(InvalidArgument):
        EpsLadder(**kw)


def test_options_config_roundtrip():
    o = SolverOptions(tol_newton=1e-9, eps_ladder=EpsLadder(factor=0.25))
    assert SolverOptions.from_config(o.to_config()) == o


@pytest.mark.parametrize("kind", ["amg", "jacobi", "ilu", "direct"])
def test_linear_solvers(kind, rng):
    n = 200
    A = sp.diags([-np.ones(n - 1), 2.5 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()
    x = rng.standard_normal(n)
    y, info = solve_spd(A, A @ x, kind=kind, rtol=1e-12)
    assert np.allclose(y, x, rtol=1e-8, atol=1e-8)


def test_pcg_detects_indefinite():
    A = sp.diags([1.0, -1.0, 1.0]).tocsr()
    with pytest.raises(NegativeCurvature):
        pcg(A, np.ones(3))
    assert issubclass(NegativeCurvature, StructuralError)
    with pytest.raises(NegativeCurvature):
        make_preconditioner(A, "jacobi")


def test_fem_operators_exact_on_linears(small_cantor):
    _, mesh = small_cantor
    space = FESpace(mesh)
    a = np.array([1.5, -0.5])
    G = space.gradients(mesh.vertices @ a)
    assert np.allclose(G, a, atol=1e-12)
    assert np.allclose(space.recover_gradients(G), a, atol=1e-12)
    assert space.vol.sum() == pytest.approx(1 - 4 / 64, rel=1e-13)
    H = np.broadcast_to(np.eye(2), (mesh.num_cells, 2, 2))
    K = space.stiffness_full(H)
    assert np.allclose(K @ np.ones(mesh.num_vertices), 0, atol=1e-12)
    Kf = space.stiffness_free(H)
    idx = space.free_idx
    assert np.allclose(Kf.toarray(), K[idx][:, idx].toarray(), atol=1e-13)
