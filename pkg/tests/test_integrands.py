import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emlab import kernels
from emlab.errors import DomainError, InvalidArgument, StructuralError
from emlab.integrands import (
    Integrand, MollifiedIntegrand, default_c_star, evaluate, grad, hess, mollifier_rule, mollify,
    perturbation_bound, sample_shell, verify_structure,
)

ANISO = [[2.0, 0.3], [0.3, 0.7]]


def families():
    return [Integrand("power", 3.0), Integrand("perturbed_power", 3.0, epsilon_perturb=0.04),
            Integrand("g_power", 2.5, anisotropy=ANISO)]


def reference_f(f, eta):
    """Closed forms written out independently of the kernels."""
    r = np.linalg.norm(eta)
    if f.kind == "power":
        return r ** f.p
    if f.kind == "perturbed_power":
        return r ** f.p + f.epsilon_perturb * eta[0] * r ** (f.p - 1)
    A = np.eye(len(eta)) if f.anisotropy is None else f.anisotropy
    return float(eta @ A @ eta) ** (f.p / 2)


def fd_grad(fun, eta, h=1e-6):
    g = np.zeros(len(eta))
    for i in range(len(eta)):
        e = np.zeros(len(eta))
        e[i] = h
        g[i] = (fun(eta + e) - fun(eta - e)) / (2 * h)
    return g


nonzero_vec = st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2).filter(
    lambda v: math.hypot(*v) > 1e-3)


# -- values against independent closed forms -------------------------------

@pytest.mark.parametrize("f", families(), ids=lambda f: f.kind)
def test_values_match_closed_forms(f, rng):
    eta = rng.standard_normal((50, 2))
    F = f.batch(eta, order=0)[0]
    ref = np.array([reference_f(f, e) for e in eta])
    assert np.allclose(F, ref, rtol=1e-13, atol=0)


@pytest.mark.parametrize("f", families(), ids=lambda f: f.kind)
def test_gradient_matches_finite_differences(f, rng):
    for eta in rng.standard_normal((20, 2)):
        g_fd = fd_grad(lambda x: reference_f(f, x), eta)
        assert np.allclose(f.grad(eta), g_fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("f", families(), ids=lambda f: f.kind)
def test_hessian_matches_finite_differences(f, rng):
    for eta in rng.standard_normal((20, 2)):
        H_fd = np.stack([fd_grad(lambda x: f.grad(x)[i], eta) for i in range(2)])
        assert np.allclose(f.hess(eta), H_fd, rtol=1e-5, atol=1e-7)


def test_power_p2_hessian_is_twice_identity():
    assert np.array_equal(Integrand("power", 2.0).hess([0.3, -0.7]), 2 * np.eye(2))


def test_perturbed_value_at_unit_vector():
    assert Integrand("perturbed_power", 3.0, epsilon_perturb=0.1, validate=False).eval([1.0, 0.0]) == pytest.approx(1.1, abs=1e-15)


# -- homogeneity identities -----------------------------------------------------

@pytest.mark.parametrize("f", families(), ids=lambda f: f.kind)
def test_euler_and_hessian_identities_1000_points(f, rng):
    eta = rng.standard_normal((1000, 2)) * rng.uniform(0.01, 10, (1000, 1))
    F, DF, H = f.batch(eta)
    euler = np.abs(np.einsum("ij,ij->i", DF, eta) - f.p * F) / (f.p * F)
    hid = np.linalg.norm(np.einsum("cij,cj->ci", H, eta) - (f.p - 1) * DF, axis=1) / np.linalg.norm(DF, axis=1)
    assert euler.max() <= 1e-9
    assert hid.max() <= 1e-8


@settings(max_examples=60, deadline=None)
@given(eta=nonzero_vec, t=st.floats(0.01, 100), p=st.floats(2.0, 6.0))
def test_homogeneity_property(eta, t, p):
    f = Integrand("power", p, validate=False)
    eta = np.array(eta)
    assert f.eval(t * eta) == pytest.approx(t ** p * f.eval(eta), rel=1e-11)


@settings(max_examples=60, deadline=None)
@given(eta=nonzero_vec, p=st.floats(2.0, 6.0), eps=st.floats(-0.05, 0.05))
def test_perturbed_euler_property(eta, p, eps):
    f = Integrand("perturbed_power", p, epsilon_perturb=eps, validate=False)
    eta = np.array(eta)
    assert f.grad(eta) @ eta == pytest.approx(p * f.eval(eta), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(eta=nonzero_vec, p=st.floats(2.0, 5.0))
def test_hessian_symmetric_and_positive(eta, p):
    H = Integrand("power", p, validate=False).hess(np.array(eta))
    assert np.allclose(H, H.T, rtol=0, atol=1e-12 * np.abs(H).max())
    assert np.linalg.eigvalsh(H)[0] > 0


# -- structure check -----------------------------------------------------------

@pytest.mark.parametrize("f", families(), ids=lambda f: f.kind)
def test_verify_structure_passes_for_admissible(f):
    rep = verify_structure(f, 2000, n=2)
    assert rep.passed
    assert rep.identities_ok


def test_verify_structure_fails_for_large_perturbation():
    f = Integrand("perturbed_power", 2.0, epsilon_perturb=0.9, validate=False)
    rep = verify_structure(f, 2000, n=2)
    assert not rep.passed
    assert rep.identities_ok
    assert not rep.convex_ok


def test_large_perturbation_rejected_on_construction():
    with pytest.raises(InvalidArgument):
        Integrand("perturbed_power", 2.0, epsilon_perturb=0.9)


def test_bad_c_star_raises_structural_error():
    with pytest.raises(StructuralError):
        Integrand("power", 3.0, c_star=1.5)


def test_default_c_star_values():
    assert default_c_star("power", 2.0) == 2.0
    assert default_c_star("power", 3.0) == 6.0
    assert default_c_star("perturbed_power", 3.0) == 7.5
    assert perturbation_bound(3.0) == 0.05


def test_sample_shell_radii(rng):
    X = sample_shell(500, 3, rng)
    r = np.linalg.norm(X, axis=1)
    assert r.min() >= 0.5 and r.max() <= 1.0


# -- errors ----------------------------------------------------------------

@pytest.mark.parametrize("bad", [dict(kind="cube", p=3), dict(kind="power", p=1.5),
                                 dict(kind="power", p=float("nan")),
                                 dict(kind="power", p=3, epsilon_perturb=0.1),
                                 dict(kind="g_power", p=3, anisotropy=[[1, 2], [0, 1]]),
                                 dict(kind="g_power", p=3, anisotropy=[[1, 0], [0, -1]])])
def test_invalid_parameters(bad):
    with pytest.raises(InvalidArgument):
        Integrand(**bad)


def test_derivatives_undefined_at_zero():
    f = Integrand("power", 3.0)
    assert f.eval([0.0, 0.0]) == 0.0
    with pytest.raises(DomainError):
        f.grad([0.0, 0.0])
    with pytest.raises(DomainError):
        hess(f, [0.0, 0.0])


def test_non_finite_eta_rejected():
    with pytest.raises(InvalidArgument):
        Integrand("power", 3.0).eval([np.nan, 1.0])


# -- mollification ---------------------------------------------------------

def test_mollifier_rule_normalized():
    for n in (2, 3):
        Y, W = mollifier_rule(n)
        assert W.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(np.linalg.norm(Y, axis=1) < 1)
        assert np.allclose(W @ Y, 0.0, atol=1e-15)


def test_mollified_quadratic_is_shifted_square(rng):
    f = Integrand("power", 2.0)
    eps = 0.3
    g = mollify(f, eps)
    Y, W = mollifier_rule(2)
    const = eps ** 2 * float(W @ np.sum(Y ** 2, axis=1))
    for eta in rng.standard_normal((10, 2)):
        assert evaluate(g, eta) == pytest.approx(eta @ eta + const, rel=1e-13)
        assert np.allclose(grad(g, eta), 2 * eta, atol=1e-13)


def test_mollified_smooth_at_zero():
    g = MollifiedIntegrand(Integrand("power", 3.0), 0.1)
    H = g.hess([0.0, 0.0])
    lam = np.linalg.eigvalsh(H)
    assert lam[0] > 0 and lam[1] / lam[0] == pytest.approx(1.0, rel=1e-12)
    assert np.allclose(g.grad([0.0, 0.0]), 0.0, atol=1e-15)


def test_mollified_converges_to_base(rng):
    f = Integrand("power", 3.0)
    eta = rng.standard_normal(2)
    errs = [abs(mollify(f, e).eval(eta) - f.eval(eta)) for e in (1e-1, 1e-2, 1e-3)]
    assert errs[0] > errs[1] > errs[2]


def test_mollify_rejects_nonpositive_radius():
    with pytest.raises(InvalidArgument):
        mollify(Integrand("power", 3.0), 0.0)


# -- backends ------------------------------------------------------------------

def test_backend_reported():
    assert kernels.BACKEND in kernels.backends()


@pytest.mark.parametrize("f", families(), ids=lambda f: f.kind)
def test_backends_agree(f, rng):
    if "compiled" not in kernels.backends():
        pytest.skip("compiled extension not built")
    G = rng.standard_normal((300, 2))
    Y, W = mollifier_rule(2)
    args = (f._code, f.p, f.epsilon_perturb, f._matrix(2), G, 0.05 * Y, W, 2)
    a = kernels.eval_batch(*args, backend="compiled")
    b = kernels.eval_batch(*args, backend="python")
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-13, atol=1e-14)


def test_threaded_evaluation_matches_serial(rng):
    f = Integrand("power", 3.0)
    G = rng.standard_normal((1001, 2))
    for x, y in zip(f.batch(G, workers=4), f.batch(G, workers=1)):
        assert np.array_equal(x, y)
