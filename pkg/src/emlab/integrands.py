"""Homogeneous convex integrands f(eta) and their mollifications.

Three families are built in:

``power``
    f(eta) = |eta|^p
``perturbed_power``
    f(eta) = |eta|^p + eps * eta_1 * |eta|^(p-1), not rotation invariant
``g_power``
    f(eta) = (eta^T A eta)^(p/2) for a symmetric positive-definite A

All three are positively p-homogeneous, so <Df(eta), eta> = p f(eta) and
D2f(eta) eta = (p-1) Df(eta).  The uniform convexity constant ``c_star``
bounds the Hessian eigenvalues on the shell 1/2 < |eta| < 1.
"""
from dataclasses import InitVar, dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import kernels
from .errors import DomainError, InvalidArgument, StructuralError

KINDS = {"power": kernels.POWER, "perturbed_power": kernels.PERTURBED, "g_power": kernels.GPOWER}

MOLLIFIER_ORDER = 8
VALIDATION_SAMPLES = 2000


def perturbation_bound(p):
    """Largest admissible |epsilon_perturb| for the perturbed family."""
    return 0.05 * min(1.0, p - 1.0)


def default_c_star(kind, p, epsilon_perturb=0.0, anisotropy=None):
    """A convexity constant that the family satisfies on the unit shell.

    For |eta|^p the Hessian eigenvalues on 1/2 < |eta| < 1 are p|eta|^(p-2)
    and p(p-1)|eta|^(p-2), so max(p(p-1), 2^(p-2)/p) suffices.  The
    perturbed family gets a 25% margin; the anisotropic family is scaled by
    the extreme eigenvalues of A.
    """
    base = max(p * (p - 1.0), 2.0 ** (p - 2.0) / p, 1.0)
    if kind == "perturbed_power":
        return 1.25 * base
    if kind == "g_power" and anisotropy is not None:
        lam = np.linalg.eigvalsh(anisotropy)
        lo, hi = float(lam[0]), float(lam[-1])
        # On the shell g = sqrt(eta^T A eta) lies in (sqrt(lo)/2, sqrt(hi)); the
        # Hessian p g^(p-2) A + p(p-2) g^(p-4) (A eta)(A eta)^T then has
        # eigenvalues between p lo (lo/4)^((p-2)/2) and p(p-1) hi^(p/2).
        big = p * (p - 1.0) * hi ** (p / 2.0)
        small = p * lo * (lo / 4.0) ** ((p - 2.0) / 2.0)
        return max(big, 1.0 / small, 1.0)
    return base


def _check_eta(eta):
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 1 or eta.size < 1:
        raise InvalidArgument("eta must be a non-empty vector")
    if not np.all(np.isfinite(eta)):
        raise InvalidArgument("eta has non-finite components")
    return eta


@lru_cache(maxsize=None)
def _mollifier_rule(n, order=MOLLIFIER_ORDER):
    # Tensor Gauss-Legendre nodes on [-1, 1]^n weighted by the bump
    # exp(-1/(1-|y|^2)), restricted to the open unit ball, normalized to 1.
    x, w = np.polynomial.legendre.leggauss(order)
    grids = np.meshgrid(*([x] * n), indexing="ij")
    Y = np.stack([g.ravel() for g in grids], axis=1)
    W = np.ones(len(Y))
    for ax in np.meshgrid(*([w] * n), indexing="ij"):
        W = W * ax.ravel()
    r2 = np.einsum("ij,ij->i", Y, Y)
    keep = r2 < 1.0
    Y, W, r2 = Y[keep], W[keep], r2[keep]
    W = W * np.exp(-1.0 / (1.0 - r2))
    W = W / W.sum()
    Y.setflags(write=False)
    W.setflags(write=False)
    return Y, W


def mollifier_rule(n):
    """Quadrature nodes ``Y`` (in the unit ball) and weights ``W`` of the bump."""
    return _mollifier_rule(int(n))


@dataclass(frozen=True, eq=False)
class Integrand:
    """A built-in structural integrand.

    Parameters
    ----------
    kind : {'power', 'perturbed_power', 'g_power'}
    p : float
        Homogeneity degree, at least 2.
    epsilon_perturb : float
        Perturbation size for ``perturbed_power``.
    anisotropy : array_like, optional
        SPD matrix for ``g_power``; identity when omitted.
    c_star : float, optional
        Convexity constant; a family default when omitted.
    validate : bool
        Run the admissibility checks and :func:`verify_structure` on
        construction.  Disable only for diagnostics on inadmissible
        parameters.
    """

    kind: str
    p: float
    epsilon_perturb: float = 0.0
    anisotropy: Optional[np.ndarray] = None
    c_star: Optional[float] = None
    validate: InitVar[bool] = True
    _code: int = field(init=False, repr=False)

    def __post_init__(self, validate):
        if self.kind not in KINDS:
            raise InvalidArgument(f"kind must be one of {sorted(KINDS)}, got {self.kind!r}")
        p = float(self.p)
        if not np.isfinite(p) or p < 2.0:
            raise InvalidArgument(f"p must be a finite real >= 2, got {self.p!r}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "_code", KINDS[self.kind])
        eps = float(self.epsilon_perturb)
        if self.kind != "perturbed_power" and eps != 0.0:
            raise InvalidArgument("epsilon_perturb applies to perturbed_power only")
        if not np.isfinite(eps):
            raise InvalidArgument("epsilon_perturb must be finite")
        object.__setattr__(self, "epsilon_perturb", eps)
        A = self.anisotropy
        if A is not None:
            if self.kind != "g_power":
                raise InvalidArgument("anisotropy applies to g_power only")
            A = np.array(A, dtype=float)
            if A.ndim != 2 or A.shape[0] != A.shape[1] or not 1 <= A.shape[0] <= 3:
                raise InvalidArgument("anisotropy must be a square matrix of size 1..3")
            if not np.all(np.isfinite(A)) or not np.allclose(A, A.T, rtol=0, atol=1e-14 * np.abs(A).max()):
                raise InvalidArgument("anisotropy must be symmetric")
            A = 0.5 * (A + A.T)
            if np.linalg.eigvalsh(A)[0] <= 0:
                raise InvalidArgument("anisotropy must be positive definite")
            A.setflags(write=False)
            object.__setattr__(self, "anisotropy", A)
        if self.c_star is None:
            object.__setattr__(self, "c_star", default_c_star(self.kind, p, eps, A))
        else:
            cs = float(self.c_star)
            if not cs >= 1.0:
                raise InvalidArgument(f"c_star must be >= 1, got {self.c_star!r}")
            object.__setattr__(self, "c_star", cs)
        if validate:
            if self.kind == "perturbed_power" and abs(eps) > perturbation_bound(p):
                raise InvalidArgument(
                    f"epsilon_perturb={eps} exceeds the admissible bound {perturbation_bound(p):.4g}")
            dims = [A.shape[0]] if A is not None else [2, 3]
            for n in dims:
                rep = verify_structure(self, VALIDATION_SAMPLES, n=n, seed=0)
                if not rep.passed:
                    raise StructuralError(f"integrand fails structure check in dimension {n}: {rep}")

    # -- construction helpers -------------------------------------------
    @classmethod
    def from_config(cls, cfg, validate=True):
        """Build from a mapping ``{"kind", "p", "epsilon_perturb"?, "anisotropy"?, "c_star"?}``."""
        return cls(kind=cfg["kind"], p=cfg["p"],
                   epsilon_perturb=cfg.get("epsilon_perturb", 0.0) or 0.0,
                   anisotropy=cfg.get("anisotropy"), c_star=cfg.get("c_star"),
                   validate=validate)

    def to_config(self):
        out = {"kind": self.kind, "p": self.p, "epsilon_perturb": self.epsilon_perturb,
               "anisotropy": None if self.anisotropy is None else self.anisotropy.tolist(),
               "c_star": self.c_star}
        return out

    @property
    def is_quadratic(self):
        """True when f is a quadratic form, so the Euler-Lagrange system is linear."""
        return self.p == 2.0 and self.kind in ("power", "g_power")

    def _matrix(self, n):
        if self.anisotropy is None:
            return np.eye(n)
        if self.anisotropy.shape[0] != n:
            raise InvalidArgument(f"anisotropy is {self.anisotropy.shape[0]}x{self.anisotropy.shape[0]}, eta has length {n}")
        return self.anisotropy

    # -- evaluation -----------------------------------------------------
    def batch(self, G, order=2, workers=1):
        """f and its derivatives up to ``order`` at every row of ``G`` (shape (N, n)); higher orders are None."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        n = G.shape[1]
        return kernels.eval_batch(self._code, self.p, self.epsilon_perturb, self._matrix(n),
                                  G, np.zeros((1, n)), np.ones(1), order, workers=workers)

    def eval(self, eta):
        """f(eta); zero at eta = 0."""
        eta = _check_eta(eta)
        return float(self.batch(eta[None], order=0)[0][0])

    def grad(self, eta):
        """Df(eta); raises DomainError at eta = 0."""
        eta = _check_eta(eta)
        if not np.any(eta):
            raise DomainError("Df is not defined at eta = 0 for a bare integrand; mollify first")
        return self.batch(eta[None], order=1)[1][0]

    def hess(self, eta):
        """D2f(eta); raises DomainError at eta = 0."""
        eta = _check_eta(eta)
        if not np.any(eta):
            raise DomainError("D2f is not defined at eta = 0 for a bare integrand; mollify first")
        return self.batch(eta[None], order=2)[2][0]

    def mollify(self, epsilon):
        return MollifiedIntegrand(self, epsilon)

    def __repr__(self):
        extra = ""
        if self.kind == "perturbed_power":
            extra = f", epsilon_perturb={self.epsilon_perturb}"
        if self.anisotropy is not None:
            extra += f", anisotropy={self.anisotropy.tolist()}"
        return f"Integrand(kind={self.kind!r}, p={self.p}{extra}, c_star={self.c_star:.6g})"


@dataclass(frozen=True, eq=False)
class MollifiedIntegrand:
    """Convolution of ``base`` with the bump of radius ``epsilon``.

    f_eps(eta) = sum_q W_q f(eta - epsilon * y_q) over the fixed bump
    quadrature rule, which is smooth enough for Newton at eta = 0 and has
    Hessian of size (epsilon + |eta|)^(p-2).
    """

    base: Integrand
    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not np.isfinite(eps) or eps <= 0:
            raise InvalidArgument(f"mollification radius must be positive, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)

    @property
    def p(self):
        return self.base.p

    @property
    def kind(self):
        return self.base.kind

    @property
    def c_star(self):
        return self.base.c_star

    @property
    def is_quadratic(self):
        return self.base.is_quadratic

    def batch(self, G, order=2, workers=1):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        n = G.shape[1]
        Y, W = mollifier_rule(n)
        b = self.base
        return kernels.eval_batch(b._code, b.p, b.epsilon_perturb, b._matrix(n),
                                  G, self.epsilon * Y, W, order, workers=workers)

    def eval(self, eta):
        eta = _check_eta(eta)
        return float(self.batch(eta[None], order=0)[0][0])

    def grad(self, eta):
        eta = _check_eta(eta)
        return self.batch(eta[None], order=1)[1][0]

    def hess(self, eta):
        eta = _check_eta(eta)
        return self.batch(eta[None], order=2)[2][0]


def evaluate(f, eta):
    """f(eta) for an integrand or its mollification."""
    return f.eval(eta)


def grad(f, eta):
    """Df(eta) for an integrand or its mollification."""
    return f.grad(eta)


def hess(f, eta):
    """D2f(eta) for an integrand or its mollification."""
    return f.hess(eta)


def mollify(f, epsilon):
    """Mollified copy of ``f`` with bump radius ``epsilon``."""
    return MollifiedIntegrand(f, epsilon)


@dataclass(frozen=True)
class StructureReport:
    """Outcome of :func:`verify_structure`."""

    samples: int
    n: int
    c_star: float
    eig_min: float
    eig_max: float
    euler_residual: float
    hessian_residual: float
    homogeneity_residual: float
    tol: float = 1e-8

    @property
    def convex_ok(self):
        lo = 1.0 / self.c_star
        slack = 1e-12 * self.c_star
        return self.eig_min >= lo - slack and self.eig_max <= self.c_star + slack

    @property
    def identities_ok(self):
        return max(self.euler_residual, self.hessian_residual, self.homogeneity_residual) < self.tol

    @property
    def passed(self):
        return self.convex_ok and self.identities_ok

    def to_dict(self):
        return {"samples": self.samples, "n": self.n, "c_star": self.c_star,
                "eig_min": self.eig_min, "eig_max": self.eig_max,
                "euler_residual": self.euler_residual, "hessian_residual": self.hessian_residual,
                "homogeneity_residual": self.homogeneity_residual, "passed": self.passed}


def sample_shell(samples, n, rng, r_lo=0.5, r_hi=1.0):
    """Points uniformly distributed on the shell r_lo < |eta| < r_hi in R^n."""
    d = rng.standard_normal((samples, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    u = rng.uniform(0.0, 1.0, samples)
    r = (r_lo ** n + u * (r_hi ** n - r_lo ** n)) ** (1.0 / n)
    return d * r[:, None]


def verify_structure(f, samples, n=None, seed=0):
    """Sample the unit shell and check convexity bounds and Euler identities.

    Parameters
    ----------
    f : Integrand
    samples : int
        Number of sample points, at least 1.
    n : int, optional
        Dimension; defaults to the anisotropy size, else 2.
    seed : int

    Returns
    -------
    StructureReport
    """
    samples = int(samples)
    if samples < 1:
        raise InvalidArgument("samples must be >= 1")
    if n is None:
        n = f.anisotropy.shape[0] if getattr(f, "anisotropy", None) is not None else 2
    rng = np.random.default_rng(seed)
    eta = sample_shell(samples, n, rng)
    F, DF, H = f.batch(eta, order=2)
    eig = np.linalg.eigvalsh(H)
    p = f.p
    euler = np.abs(np.einsum("ij,ij->i", DF, eta) - p * F) / (p * F)
    Heta = np.einsum("cij,cj->ci", H, eta)
    dfn = np.linalg.norm(DF, axis=1)
    hid = np.abs(Heta - (p - 1.0) * DF).max(axis=1) / dfn
    F2 = f.batch(2.0 * eta, order=0)[0]
    homog = np.abs(F2 / F - 2.0 ** p) / 2.0 ** p
    return StructureReport(samples=samples, n=n, c_star=float(f.c_star),
                           eig_min=float(eig[:, 0].min()), eig_max=float(eig[:, -1].max()),
                           euler_residual=float(euler.max()), hessian_residual=float(hid.max()),
                           homogeneity_residual=float(homog.max()))
