"""Discrete minimizers of the energy int f(grad u) with Dirichlet data.

The unknown is the P1 field u_h with u_h = 1 on the outer boundary and 0 on
the inner pieces (by default).  For degenerate integrands the energy is
first regularized with the mollified integrand f_eps, and eps is driven down
a geometric ladder with a warm start on each rung.  Every rung is solved by
Newton's method with a backtracking Armijo line search.

The residual reported is the l1 norm of the free-node energy gradient.  For
any test function phi with |phi| <= 1 vanishing on the Dirichlet nodes,
|int <Df(grad u_h), grad phi>| is bounded by it.
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .errors import InvalidArgument, SolverFailure, StructuralError
from .fem import FESpace
from .integrands import Integrand, MollifiedIntegrand
from .linsolve import NegativeCurvature, solve_spd
from .mesh import INNER, INTERIOR, OUTER

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpsLadder:
    """Mollification radii eps0, eps0*factor, ... down to eps_final.

    ``eps_final`` defaults to ``eps_final_rel * max|grad u_h|``.
    """

    eps0: float = 1.0
    factor: float = 0.5
    eps_final: Optional[float] = None
    eps_final_rel: float = 1e-8

    def __post_init__(self):
        if not self.eps0 > 0:
            raise InvalidArgument("eps0 must be positive")
        if not 0 < self.factor < 1:
            raise InvalidArgument("ladder factor must lie in (0, 1)")
        if self.eps_final is not None and not self.eps_final > 0:
            raise InvalidArgument("eps_final must be positive")
        if not self.eps_final_rel > 0:
            raise InvalidArgument("eps_final_rel must be positive")


@dataclass(frozen=True)
class SolverOptions:
    """Newton and continuation controls."""

    tol_newton: float = 1e-10
    eps_ladder: EpsLadder = EpsLadder()
    max_iter: int = 50
    cg_tol: float = 1e-12
    delta_zero_grad: float = 1e-7
    preconditioner: str = "amg"
    max_restarts: int = 3
    rung_rtol: float = 1e-6
    armijo: float = 1e-4
    workers: int = 1

    def __post_init__(self):
        if not self.tol_newton > 0:
            raise InvalidArgument("tol_newton must be positive")
        if int(self.max_iter) < 1:
            raise InvalidArgument("max_iter must be >= 1")
        if not 0 < self.cg_tol < 1:
            raise InvalidArgument("cg_tol must lie in (0, 1)")
        if not self.delta_zero_grad >= 0:
            raise InvalidArgument("delta_zero_grad must be >= 0")
        if self.preconditioner not in ("amg", "jacobi", "ilu", "direct"):
            raise InvalidArgument(f"unknown preconditioner {self.preconditioner!r}")

    @classmethod
    def from_config(cls, cfg):
        cfg = dict(cfg)
        lad = cfg.pop("eps_ladder", None) or {}
        return cls(eps_ladder=EpsLadder(**lad), **cfg)

    def to_config(self):
        return asdict(self)


@dataclass(frozen=True)
class DirichletSpec:
    """Boundary values: ``inner`` on INNER vertices, ``outer`` on OUTER ones.

    ``values`` (length V) overrides both at every Dirichlet vertex.
    """

    inner: float = 0.0
    outer: float = 1.0
    values: Optional[np.ndarray] = None

    def nodal(self, mesh):
        if self.values is not None:
            v = np.asarray(self.values, dtype=float)
            if v.shape != (mesh.num_vertices,):
                raise InvalidArgument("Dirichlet values do not match the mesh")
            out = np.where(mesh.tags == INTERIOR, 0.0, v)
        else:
            out = np.zeros(mesh.num_vertices)
            out[mesh.tags == INNER] = self.inner
            out[mesh.tags == OUTER] = self.outer
        return out


@dataclass
class DiscreteSolution:
    """Result of :func:`solve`.

    Attributes
    ----------
    u : nodal values
    energy : sum_c |c| f_final(grad u_c)
    residual : l1 norm of the free-node energy gradient
    reaction : full-node energy gradient, int <Df_final(grad u_h), grad phi_i>
    integrand : the integrand requested
    final : integrand of the last rung (mollified or the bare one)
    trace : one dict per rung
    zero_grad_cells : cells with |grad u_h| <= delta''
    """

    mesh: object
    space: FESpace
    u: np.ndarray
    grads: np.ndarray
    energy: float
    residual: float
    residual_l2: float
    reaction: np.ndarray
    integrand: object
    final: object
    trace: List[dict]
    delta_zero: float
    zero_grad_cells: np.ndarray
    zero_grad_nodes: np.ndarray
    converged: bool
    options: SolverOptions
    bc: DirichletSpec = field(default_factory=DirichletSpec)
    wall_time: float = 0.0

    @property
    def max_grad(self):
        return float(np.linalg.norm(self.grads, axis=1).max()) if len(self.grads) else 0.0

    @property
    def u_min(self):
        return float(self.u.min())

    @property
    def u_max(self):
        return float(self.u.max())

    def summary(self):
        return {"converged": self.converged, "energy": self.energy, "residual": self.residual,
                "residual_l2": self.residual_l2, "u_min": self.u_min, "u_max": self.u_max,
                "max_grad": self.max_grad, "delta_zero": self.delta_zero,
                "zero_grad_cells": int(self.zero_grad_cells.sum()),
                "final_eps": getattr(self.final, "epsilon", 0.0),
                "rungs": len(self.trace), "newton_iterations": int(sum(t["iterations"] for t in self.trace)),
                "wall_time": self.wall_time}


class _State:
    """Energy, full-node gradient and cell Hessians at one iterate."""

    def __init__(self, prob, uf):
        self.uf = uf
        G = prob.space.gradients(prob.full(uf))
        F, DF, self.H = prob.fe.batch(G, order=2, workers=prob.workers)
        self.E = float(prob.space.vol @ F)
        self.g_full = prob.space.load(DF)
        self.g = self.g_full[prob.space.free_idx]
        self.res = float(np.abs(self.g).sum())


class _Problem:
    def __init__(self, space, fe, u_fixed, workers):
        self.space, self.fe, self.workers = space, fe, workers
        self.u_fixed = u_fixed

    def full(self, uf):
        u = self.u_fixed.copy()
        u[self.space.free_idx] = uf
        return u

    def state(self, uf):
        return _State(self, uf)


def _newton(prob, st, opts, target, row, step_cap=1.0):
    """Damped Newton from state ``st``; returns (state, converged)."""
    for _ in range(opts.max_iter):
        if st.res <= target:
            return st, True
        K = prob.space.stiffness_free(st.H)
        try:
            d, info = solve_spd(K, -st.g, kind=opts.preconditioner, rtol=opts.cg_tol)
        except NegativeCurvature as exc:
            raise StructuralError(f"non-convex Newton system: {exc}") from exc
        row["cg_iterations"].append(info["iterations"])
        slope = float(st.g @ d)
        if not slope < 0:
            raise StructuralError(f"Newton direction is not a descent direction (slope {slope:.3e})")
        alpha = step_cap
        new = None
        for _ in range(40):
            trial = prob.state(st.uf + alpha * d)
            if trial.E <= st.E + opts.armijo * alpha * slope:
                new = trial
                break
            # energy change at round-off level: accept if the gradient shrinks
            if abs(trial.E - st.E) <= 1e-13 * max(abs(st.E), 1e-300) and trial.res < st.res:
                new = trial
                break
            alpha *= 0.5
        if new is None:
            return st, False
        st = new
        row["iterations"] += 1
        row["energies"].append(st.E)
        row["residuals"].append(st.res)
    return st, st.res <= target


def _run_rung(prob, st, opts, target, row):
    for restart in range(opts.max_restarts + 1):
        st, ok = _newton(prob, st, opts, target, row, step_cap=0.5 ** restart)
        row["restarts"] = restart
        if ok:
            break
    row["energy"] = st.E
    row["residual"] = st.res
    return st, ok


def _row(stage, eps):
    return {"stage": stage, "eps": eps, "iterations": 0, "restarts": 0, "energies": [],
            "residuals": [], "cg_iterations": []}


def solve(mesh, f, bc: DirichletSpec = DirichletSpec(), opts: SolverOptions = SolverOptions(), space=None):
    """Minimize the P1 energy of ``f`` on ``mesh`` with Dirichlet data ``bc``.

    Parameters
    ----------
    mesh : Mesh
    f : Integrand
    bc : DirichletSpec
    opts : SolverOptions
    space : FESpace, optional
        Reuse precomputed operators for the same mesh.

    Returns
    -------
    DiscreteSolution

    Raises
    ------
    SolverFailure
        If a rung fails after all restarts.
    StructuralError
        If a Newton system is not positive definite.
    """
    t0 = time.perf_counter()
    if space is None:
        space = FESpace(mesh)
    elif space.mesh is not mesh:
        raise InvalidArgument("space was built for a different mesh")
    u_fixed = bc.nodal(mesh)
    free = space.free_idx
    if len(free) == 0:
        raise InvalidArgument("mesh has no free vertices")
    trace = []

    # initial guess: the harmonic extension of the boundary data
    lap = Integrand("power", 2.0, validate=False)
    prob = _Problem(space, lap, u_fixed, opts.workers)
    row = _row("laplace", 0.0)
    st, ok = _run_rung(prob, prob.state(np.zeros(len(free))), opts, opts.tol_newton, row)
    trace.append(row)
    if not ok:
        raise SolverFailure("Newton failed for the Laplace initial guess", trace=trace)

    if f.is_quadratic:
        prob = _Problem(space, f, u_fixed, opts.workers)
        row = _row("exact", 0.0)
        st, ok = _run_rung(prob, prob.state(st.uf), opts, opts.tol_newton, row)
        trace.append(row)
        final = f
        if not ok:
            raise SolverFailure("Newton failed for the quadratic energy", trace=trace)
    else:
        lad = opts.eps_ladder
        eps = lad.eps0
        while True:
            gmax = float(np.linalg.norm(space.gradients(prob.full(st.uf)), axis=1).max())
            eps_final = lad.eps_final if lad.eps_final is not None else lad.eps_final_rel * max(gmax, 1e-300)
            last = eps <= eps_final
            if last:
                eps = eps_final
            fe = MollifiedIntegrand(f, eps)
            prob = _Problem(space, fe, u_fixed, opts.workers)
            st = prob.state(st.uf)
            scale = float(np.abs(st.g_full[~space.free]).sum())
            target = opts.tol_newton if last else max(opts.tol_newton, opts.rung_rtol * scale)
            row = _row("rung", eps)
            st, ok = _run_rung(prob, st, opts, target, row)
            trace.append(row)
            log.info("rung eps=%.3e iterations=%d residual=%.3e", eps, row["iterations"], row["residual"])
            if not ok:
                raise SolverFailure(f"Newton failed on the rung eps={eps:.3e}", trace=trace)
            if last:
                final = fe
                break
            eps *= lad.factor

    u = prob.full(st.uf)
    G = space.gradients(u)
    gnorm = np.linalg.norm(G, axis=1)
    delta = opts.delta_zero_grad * float(gnorm.max())
    zc = gnorm <= delta
    zn = np.zeros(mesh.num_vertices, dtype=bool)
    zn[mesh.cells[zc].ravel()] = True
    return DiscreteSolution(mesh=mesh, space=space, u=u, grads=G, energy=st.E, residual=st.res,
                            residual_l2=float(np.linalg.norm(st.g)), reaction=st.g_full, integrand=f,
                            final=final, trace=trace, delta_zero=delta, zero_grad_cells=zc,
                            zero_grad_nodes=zn, converged=st.res <= opts.tol_newton, options=opts, bc=bc,
                            wall_time=time.perf_counter() - t0)


def flux_pairing(sol: DiscreteSolution, f, phi, exact_system=True):
    """int <Df(grad u_h), grad phi> for nodal values ``phi``.

    With ``exact_system`` and ``f`` the integrand that was solved for, the
    last-rung integrand is used, so the pairing is exactly the discrete
    Euler-Lagrange form.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (sol.mesh.num_vertices,):
        raise InvalidArgument(f"phi has shape {phi.shape}, mesh has {sol.mesh.num_vertices} vertices")
    fe = sol.final if (exact_system and f is sol.integrand) else f
    DF = fe.batch(sol.grads, order=1, workers=sol.options.workers)[1]
    return float(np.einsum("ci,ci->c", DF, sol.space.gradients(phi)) @ sol.space.vol)
