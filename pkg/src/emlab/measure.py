"""Boundary measures from the discrete weak form.

The mass of a boundary piece K is -int <Df(grad u_h), grad phi_K> for a
cutoff phi_K equal to 1 near K and 0 near every other piece.  On the mesh
this is -sum_i phi_K(x_i) r_i, where r_i is the full-node energy gradient
of the solution (the reaction at vertex i).  Free vertices carry residual
sized reactions only, so two cutoffs agreeing on the Dirichlet vertices
give masses that differ by at most the l1 residual.
"""
import csv
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .cantor import CantorTree, dilates_disjoint
from .errors import ConsistencyError, DomainError, InvalidArgument
from .mesh import INNER


@dataclass
class BoundaryMeasure:
    """Masses of the generation-m cubes and their aggregates.

    ``levels[k]`` holds the masses of the generation-k cubes, obtained by
    summing descendants, so the aggregation is exact by construction.
    """

    tree: Optional[CantorTree]
    masses: np.ndarray
    levels: List[np.ndarray]
    residual: float = 0.0
    clipped: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cutoff: tuple = ()
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_masses(cls, tree, masses, **kw):
        masses = np.asarray(masses, dtype=float)
        if tree is not None and masses.shape != (tree.count(tree.m),):
            raise InvalidArgument(f"expected {tree.count(tree.m)} masses, got {masses.shape}")
        levels = [masses]
        if tree is not None:
            for _ in range(tree.m):
                levels.append(levels[-1].reshape(-1, tree.branching).sum(axis=1))
            levels.reverse()
        return cls(tree=tree, masses=masses, levels=levels, **kw)

    @classmethod
    def uniform(cls, tree, total=1.0):
        """Equal mass on every generation-m cube."""
        N = tree.count(tree.m)
        return cls.from_masses(tree, np.full(N, total / N))

    @classmethod
    def from_function(cls, tree, fn):
        """Masses fn(cube) on the generation-m cubes."""
        return cls.from_masses(tree, np.array([fn(c) for c in tree.cubes(tree.m)], dtype=float))

    @property
    def total(self):
        return float(math.fsum(self.masses))

    @property
    def clip_max(self):
        return float(self.clipped.max()) if len(self.clipped) else 0.0

    def at(self, k):
        return self.levels[k]

    def normalized(self):
        """Copy scaled to total 1."""
        t = self.total
        if not t > 0:
            raise InvalidArgument("cannot normalize a measure with zero total")
        return BoundaryMeasure.from_masses(self.tree, self.masses / t, residual=self.residual / t,
                                           clipped=self.clipped / t, cutoff=self.cutoff, meta=dict(self.meta))

    def scaled(self, t):
        return BoundaryMeasure.from_masses(self.tree, self.masses * t, residual=self.residual * t,
                                           clipped=self.clipped * t, cutoff=self.cutoff, meta=dict(self.meta))

    def records(self):
        for k, lv in enumerate(self.levels):
            for j, v in enumerate(lv):
                yield {"k": k, "j": j, "mass": float(v)}

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")

    def write_csv_summary(self, path):
        """One row per generation: count, total, min, max, positive count."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "count", "total", "min", "max", "positive"])
            for k, lv in enumerate(self.levels):
                w.writerow([k, len(lv), repr(float(math.fsum(lv))), repr(float(lv.min())),
                            repr(float(lv.max())), int(np.sum(lv > 0))])

    def summary(self):
        return {"total": self.total, "residual": self.residual, "clip_max": self.clip_max,
                "clipped_count": int(np.sum(self.clipped > 0)), "cutoff": list(self.cutoff),
                "generations": len(self.levels) - 1, **self.meta}


def _reaction(sol, f):
    if f is None or f is sol.integrand:
        return sol.reaction
    DF = f.batch(sol.grads, order=1, workers=sol.options.workers)[1]
    return sol.space.load(DF)


def cutoff_values(tree, X, t_in, t_out):
    """Nodal plateau cutoffs: cube index and value for every point.

    The value is 1 inside the t_in-dilate of the cube that contains the point
    in its t_out-dilate, 0 outside, with a linear ramp in the max-norm
    distance between the two dilates.
    """
    m = tree.m
    j = tree.locate(X, m, dilation=t_out)
    ok = j >= 0
    val = np.zeros(len(X))
    if np.any(ok):
        d = np.max(np.abs(X[ok] - tree.centers[m][j[ok]]), axis=1) / (0.5 * tree.side(m))
        val[ok] = np.clip((t_out - d) / (t_out - t_in), 0.0, 1.0)
    return j, val


def extract(sol, f, tree: Optional[CantorTree], cutoff=None, negative_factor=10.0):
    """Boundary measure of a solved Cantor problem (or of an annulus).

    Parameters
    ----------
    sol : DiscreteSolution
    f : Integrand
        The integrand of the solve; another integrand assembles the pairing
        anew.
    tree : CantorTree or None
        None for an annulus mesh, which has a single inner piece.
    cutoff : (t_in, t_out), optional
        Dilation factors of the plateau and of the support; defaults to
        (1 + theta/2, 1 + theta).  The t_out-dilates must be disjoint.
    negative_factor : float
        Masses below -negative_factor * residual raise ConsistencyError;
        smaller negative values are clipped to 0 and reported.
    """
    mesh = sol.mesh
    r = _reaction(sol, f)
    res = sol.residual
    if tree is None:
        if mesh.kind != "annulus":
            raise InvalidArgument("a tree is required for Cantor meshes")
        phi = (mesh.tags == INNER).astype(float)
        raw = np.array([-float(phi @ r)])
        cutoff = ()
    else:
        if mesh.kind != "cantor" or mesh.n != tree.n or mesh.meta.get("m") != tree.m:
            raise InvalidArgument("mesh was not generated for this tree")
        th = tree.theta
        t_in, t_out = cutoff if cutoff is not None else (1.0 + 0.5 * th, 1.0 + th)
        if not 1.0 <= t_in < t_out:
            raise InvalidArgument("cutoff needs 1 <= t_in < t_out")
        if not dilates_disjoint(tree.spec, tree.m, theta=t_out - 1.0):
            raise InvalidArgument(f"t_out={t_out} dilates of generation-{tree.m} cubes overlap")
        j, phi = cutoff_values(tree, mesh.vertices, t_in, t_out)
        sel = (j >= 0) & (phi > 0)
        on = mesh.tags == INNER
        if np.any(on & (phi < 1)):
            raise InvalidArgument("cutoff plateau does not cover the inner boundary")
        raw = -np.bincount(j[sel], weights=phi[sel] * r[sel], minlength=tree.count(tree.m))
        cutoff = (float(t_in), float(t_out))
    worst = float(raw.min()) if len(raw) else 0.0
    if worst < -negative_factor * res and worst < -1e-12 * max(float(np.abs(raw).sum()), 1e-300):
        raise ConsistencyError(f"mass {worst:.3e} below -{negative_factor} x residual ({res:.3e})")
    clipped = np.maximum(-raw, 0.0)
    masses = np.maximum(raw, 0.0)
    return BoundaryMeasure.from_masses(tree, masses, residual=res, clipped=clipped, cutoff=cutoff,
                                       meta={"p": f.p, "kind": f.kind})


def global_inner_cutoff(mesh):
    """Nodal cutoff equal to 1 on every inner vertex and 0 elsewhere."""
    return (mesh.tags == INNER).astype(float)


def _arc_weights(theta, arcs):
    # piecewise-linear partition of unity in angle, one hat per arc centre
    t = np.mod(theta, 2 * np.pi) / (2 * np.pi / arcs)
    k0 = np.floor(t).astype(int) % arcs
    w1 = t - np.floor(t)
    W = np.zeros((len(theta), arcs))
    W[np.arange(len(theta)), k0] = 1.0 - w1
    W[np.arange(len(theta)), (k0 + 1) % arcs] += w1
    return W


def smooth_density_check(sol, f, arcs=8):
    """Largest relative gap between weak arc masses and boundary densities.

    The weak mass of arc k is -sum_i w_k(x_i) r_i over the inner circle with
    w_k a piecewise-linear hat in angle; the density side integrates
    p f(grad u)/|grad u| times the same hat along the inner boundary edges,
    using the gradient of the adjacent cell.

    Returns
    -------
    gap : float
    detail : dict with arrays 'weak' and 'density'
    """
    mesh = sol.mesh
    if mesh.kind != "annulus":
        raise InvalidArgument("smooth_density_check needs an annulus mesh")
    inner = mesh.tags == INNER
    if np.any(sol.zero_grad_nodes & inner):
        raise DomainError("vanishing gradient on the boundary: the density is undefined")
    r = _reaction(sol, f)
    X = mesh.vertices
    theta = np.arctan2(X[:, 1], X[:, 0])
    W = _arc_weights(theta[inner], arcs)
    weak = -(W * r[inner][:, None]).sum(axis=0)

    # boundary edges on the inner circle and their cells
    cells = mesh.cells
    dens = np.zeros(arcs)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        e = cells[:, [a, b]]
        on = inner[e[:, 0]] & inner[e[:, 1]]
        if not np.any(on):
            continue
        c = np.flatnonzero(on)
        G = sol.grads[c]
        F = f.batch(G, order=0)[0]
        rho = f.p * F / np.linalg.norm(G, axis=1)
        P, Q = X[e[c, 0]], X[e[c, 1]]
        L = np.linalg.norm(Q - P, axis=1)
        wa = _arc_weights(theta[e[c, 0]], arcs)
        wb = _arc_weights(theta[e[c, 1]], arcs)
        dens += ((0.5 * (wa + wb)) * (rho * L)[:, None]).sum(axis=0)
    gap = float(np.max(np.abs(weak - dens) / np.abs(weak)))
    return gap, {"weak": weak, "density": dens}


@dataclass
class DoublingReport:
    ratio_min: float
    ratio_max: float
    ratio_median: float
    per_generation_max: List[float]
    count: int
    zero_children: int
    flagged: int
    cap: Optional[float]
    total: float

    def to_dict(self):
        return dict(self.__dict__)


def doubling_scan(mass: BoundaryMeasure, cap=None) -> DoublingReport:
    """Distribution of mu(parent)/mu(child) over generations 1..m."""
    tree = mass.tree
    if tree is None or tree.m < 1:
        raise InvalidArgument("doubling scan needs a tree with at least one generation")
    ratios, per_gen, zeros = [], [], 0
    for k in range(1, tree.m + 1):
        child = mass.levels[k]
        parent = np.repeat(mass.levels[k - 1], tree.branching)
        pos = child > 0
        zeros += int(np.sum(~pos))
        rk = parent[pos] / child[pos]
        ratios.append(rk)
        per_gen.append(float(rk.max()) if len(rk) else math.inf)
    allr = np.concatenate(ratios) if ratios else np.zeros(0)
    flagged = int(np.sum(allr > cap)) if cap is not None else 0
    return DoublingReport(ratio_min=float(allr.min()), ratio_max=float(allr.max()),
                          ratio_median=float(np.median(allr)), per_generation_max=per_gen,
                          count=int(len(allr)), zero_children=zeros, flagged=flagged,
                          cap=cap, total=mass.total)
