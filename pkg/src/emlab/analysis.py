"""Dimension estimates and diagnostics for boundary measures.

``entropy_dimension`` fits the slope of S_k = sum_j mu_kj log mu_kj against
L_k = log s_k over a window of generations; for an exact-dimensional
measure on the cube tree the slope is its dimension.

``subsolution_test`` checks the sign of the discrete form
int <D2f(grad u) grad v, grad phi> with v = log f(grad u) against
nonnegative test functions phi.  When p >= n the form is expected to be
nonpositive.
"""
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .cantor import stopping_cover
from .errors import InvalidArgument, NoTestPossible
from .measure import BoundaryMeasure

DEFAULT_DELTAS = (0.01, 0.02, 0.05, 0.1)


@dataclass
class DimensionReport:
    """Entropy sums, log side lengths and the fitted slope."""

    S: List[float]
    L: List[float]
    window: tuple
    slope: float
    intercept: float
    fit_residual: float
    low_confidence: bool
    discarded_fraction: List[float]
    mass_floor: float
    content: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def default_window(m):
    if m < 2:
        raise InvalidArgument("a dimension fit needs at least two generations")
    return (1, m - 1) if m >= 3 else (1, m)


def entropy_dimension(mass: BoundaryMeasure, window=None, mass_floor_rel=1e-14, low_conf_residual=0.1):
    """Slope of the entropy sums against log side length.

    Parameters
    ----------
    mass : BoundaryMeasure
        Normalized to total 1 before the sums are taken.
    window : (k_lo, k_hi), optional
        Generations of the fit, 1 <= k_lo < k_hi <= m.  Defaults to
        (1, m-1), leaving out the last generation.
    mass_floor_rel : float
        Cubes with normalized mass at or below this are left out of S_k.
    """
    tree = mass.tree
    m = tree.m
    if window is None:
        window = default_window(m)
    k_lo, k_hi = int(window[0]), int(window[1])
    if not (1 <= k_lo < k_hi <= m):
        raise InvalidArgument(f"window {window} must satisfy 1 <= k_lo < k_hi <= {m}")
    norm = mass.normalized()
    S, L, disc = [], [], []
    for k in range(m + 1):
        pk = norm.levels[k]
        keep = pk > mass_floor_rel
        q = pk[keep]
        S.append(math.fsum(q * np.log(q)))
        disc.append(max(0.0, 1.0 - math.fsum(q)))
        L.append(math.log(tree.side(k)))
    ks = np.arange(k_lo, k_hi + 1)
    x = np.array(L)[ks]
    y = np.array(S)[ks]
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    fit_res = float(np.sqrt(np.mean(resid ** 2)))
    return DimensionReport(S=S, L=L, window=(k_lo, k_hi), slope=float(coef[0]), intercept=float(coef[1]),
                           fit_residual=fit_res, low_confidence=fit_res > low_conf_residual,
                           discarded_fraction=disc, mass_floor=mass_floor_rel,
                           meta={"discard_ok": max(disc) < 0.01})


def auto_threshold(mass: BoundaryMeasure):
    """Smallest power of two M for which the root cube fails mu >= M s^(n-1)."""
    tree = mass.tree
    mu0 = float(mass.levels[0][0])
    s0 = tree.side(0) ** (tree.n - 1)
    M = 2.0 ** math.floor(math.log2(mu0 / s0)) if mu0 > 0 else 1.0
    while mu0 >= M * s0:
        M *= 2.0
    while M > 1e-300 and mu0 < (M / 2.0) * s0:
        M /= 2.0
    return M


@dataclass
class ContentTable:
    M: float
    floor_gen: int
    deltas: List[float]
    sums: List[float]
    good: int
    bad: int
    covered_fraction: float
    empty: bool

    def to_dict(self):
        return asdict(self)


def stopping_content(mass: BoundaryMeasure, M, s_floor_gen: int, deltas: Sequence[float] = DEFAULT_DELTAS):
    """Sum of s(Q)^(n-1-delta') over the good cubes of the stopping cover.

    ``M`` may be 'auto' for :func:`auto_threshold`.
    """
    tree = mass.tree
    if M == "auto":
        M = auto_threshold(mass)
    M = float(M)
    if not M > 0:
        raise InvalidArgument("M must be positive")
    cover = stopping_cover(tree, mass, M, s_floor_gen)
    n = tree.n
    sums = [math.fsum(tree.side(k) ** (n - 1 - d) for k, _ in cover.good) for d in deltas]
    covered = math.fsum(float(mass.levels[k][j]) for k, j in cover.good)
    total = mass.total
    return ContentTable(M=M, floor_gen=int(s_floor_gen), deltas=[float(d) for d in deltas], sums=sums,
                        good=len(cover.good), bad=len(cover.bad),
                        covered_fraction=covered / total if total > 0 else 0.0, empty=not cover.good)


@dataclass
class SubsolutionReport:
    count: int
    hats: int
    bumps: int
    max_pairing: float
    min_pairing: float
    positive_fraction: float
    form_scale: float
    sign_tol: float
    delta_zero: float
    p: float
    n: int
    passed: bool

    def to_dict(self):
        return asdict(self)


def _log_f(f, G):
    F = f.batch(G, order=0)[0]
    with np.errstate(divide="ignore"):
        return np.where(F > 0, np.log(np.where(F > 0, F, 1.0)), -np.inf)


def subsolution_forms(sol, f):
    """Cell fluxes D2f(grad u) grad v and the nodal hat pairings.

    Returns
    -------
    flux : (C, n) array
    v : nodal values of log f(recovered nodal gradient)
    """
    space = sol.space
    Gn = space.recover_gradients(sol.grads)
    v = _log_f(f, Gn)
    finite = np.isfinite(v)
    vz = np.where(finite, v, 0.0)
    H = f.batch(sol.grads, order=2)[2]
    gv = space.gradients(vz)
    flux = np.einsum("cij,cj->ci", H, gv)
    bad_cells = ~np.all(finite[sol.mesh.cells], axis=1)
    return flux, v, bad_cells


def subsolution_test(sol, f, trials=32, seed=0, tol_rel=1e-6, include_hats=True):
    """Sign test of int <D2f(grad u) grad v, grad phi> <= 0 for phi >= 0.

    Test functions are the interior hats whose star touches neither a
    Dirichlet vertex nor a cell with |grad u| <= delta'', plus ``trials``
    random radial plateau bumps with supports in the same region.  The pass
    tolerance is ``tol_rel`` times the largest value of
    int |D2f grad v| |grad phi| over the tests.
    """
    mesh = sol.mesh
    n = mesh.n
    if f.p < n:
        raise InvalidArgument(f"the sign test needs p >= n, got p={f.p}, n={n}")
    space = sol.space
    cells = mesh.cells
    flux, v, bad_cells = subsolution_forms(sol, f)
    dirichlet = ~space.free
    excluded_cell = sol.zero_grad_cells | bad_cells | np.any(dirichlet[cells], axis=1)
    V = mesh.num_vertices
    blocked = np.zeros(V, dtype=bool)
    blocked[cells[excluded_cell].ravel()] = True
    admissible = space.free & ~blocked
    pair = space.load(flux)
    fnorm = np.linalg.norm(flux, axis=1)
    # per-vertex hat scale: sum_c |flux_c| |grad lambda_a| |c|
    gl = np.linalg.norm(space.B, axis=1)  # (C, n+1)
    hat_scale = np.bincount(cells.ravel(), weights=(gl * (fnorm * space.vol)[:, None]).ravel(), minlength=V)

    values, scales = [], []
    hats = 0
    if include_hats:
        idx = np.flatnonzero(admissible)
        values.extend(pair[idx].tolist())
        scales.extend(hat_scale[idx].tolist())
        hats = len(idx)

    bumps = 0
    cand = np.flatnonzero(admissible)
    if trials > 0 and len(cand):
        rng = np.random.default_rng(seed)
        X = mesh.vertices
        stop = cKDTree(X[blocked | dirichlet]) if np.any(blocked | dirichlet) else None
        attempts = 0
        while bumps < trials and attempts < 20 * trials:
            attempts += 1
            z = X[cand[rng.integers(len(cand))]]
            dist = stop.query(z)[0] if stop is not None else 1.0
            R2 = dist * rng.uniform(0.3, 0.9)
            R1 = R2 * rng.uniform(0.2, 0.7)
            phi = np.clip((R2 - np.linalg.norm(X - z, axis=1)) / (R2 - R1), 0.0, 1.0)
            supp = np.any(phi[cells] > 0, axis=1)
            if not np.any(supp) or np.any(supp & excluded_cell):
                continue
            gp = space.gradients(phi)
            values.append(float(phi @ pair))
            scales.append(float(np.sum(fnorm * np.linalg.norm(gp, axis=1) * space.vol)))
            bumps += 1
    if not values:
        raise NoTestPossible("every candidate test function meets a zero-gradient cell or the boundary")
    values = np.array(values)
    form_scale = float(max(scales))
    sign_tol = tol_rel * form_scale
    return SubsolutionReport(count=len(values), hats=hats, bumps=bumps, max_pairing=float(values.max()),
                             min_pairing=float(values.min()),
                             positive_fraction=float(np.mean(values > 0)), form_scale=form_scale,
                             sign_tol=sign_tol, delta_zero=sol.delta_zero, p=f.p, n=n,
                             passed=bool(values.max() <= sign_tol))


@dataclass
class SweepRow:
    p: float
    estimate: float
    fit_residual: float
    refinement_delta: float
    status: str
    estimates: List[float] = field(default_factory=list)

    def as_csv_row(self):
        return [repr(self.p), repr(self.estimate), repr(self.fit_residual), repr(self.refinement_delta), self.status]


CSV_COLUMNS = ["p", "estimate", "fit_residual", "refinement_delta", "status"]


@dataclass
class ComparisonTable:
    rows: List[SweepRow]
    n: int
    margin: float = 0.0

    @property
    def all_below(self):
        """True when every converged estimate is below n - 1 - margin."""
        ok = [r for r in self.rows if r.status == "ok"]
        return bool(ok) and all(r.estimate < self.n - 1 - self.margin for r in ok)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_csv_row())
        return buf.getvalue()

    def to_dict(self):
        return {"n": self.n, "margin": self.margin, "all_below": self.all_below,
                "rows": [asdict(r) for r in self.rows]}


def dimension_vs_p(p_list: Sequence[float], runner: Callable, levels: Sequence = (0,), n=2, margin=0.0):
    """Entropy-dimension estimates for each p over one or more mesh levels.

    Parameters
    ----------
    p_list : sequence of float
    runner : callable (p, level) -> DimensionReport
        Runs the pipeline; may raise an emlab error, which marks the row.
    levels : sequence
        Mesh levels, coarse to fine; the last one gives the estimate and the
        refinement delta is its difference from the previous one.
    """
    if len(p_list) == 0:
        raise InvalidArgument("p list is empty")
    rows = []
    for p in p_list:
        ests, fit, status = [], math.nan, "ok"
        for lev in levels:
            try:
                rep = runner(p, lev)
            except Exception as exc:  # recorded per row, the sweep continues
                status = f"failed: {type(exc).__name__}: {exc}"
                break
            ests.append(rep.slope)
            fit = rep.fit_residual
        est = ests[-1] if ests and status == "ok" else math.nan
        delta = abs(ests[-1] - ests[-2]) if len(ests) >= 2 and status == "ok" else (0.0 if status == "ok" else math.nan)
        rows.append(SweepRow(p=float(p), estimate=est, fit_residual=fit, refinement_delta=delta,
                             status=status, estimates=ests))
    return ComparisonTable(rows=rows, n=n, margin=margin)
