"""Preconditioned conjugate gradients for the SPD Newton systems."""
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import StructuralError

PRECONDITIONERS = ("amg", "jacobi", "ilu", "direct")


class NegativeCurvature(StructuralError):
    """CG met a direction d with d^T A d <= 0."""


def make_preconditioner(A, kind="amg"):
    """Return a callable r -> M^{-1} r for the SPD matrix ``A``."""
    A = sp.csr_matrix(A)
    if kind == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0):
            raise NegativeCurvature("non-positive diagonal entry in the Newton matrix")
        inv = 1.0 / d
        return lambda r: inv * r
    if kind == "ilu":
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=10)
        return ilu.solve
    if kind == "amg":
        import pyamg
        # 'local' weighting avoids the randomized spectral-radius estimate, so setup is reproducible
        ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric", max_coarse=500,
                                               smooth=("jacobi", {"omega": 4.0 / 3.0, "weighting": "local"}))
        M = ml.aspreconditioner(cycle="V")
        return lambda r: M @ r
    raise ValueError(f"unknown preconditioner {kind!r}")


def pcg(A, b, M=None, x0=None, rtol=1e-12, maxiter=None):
    """Conjugate gradients; raises NegativeCurvature if A fails to be positive.

    Returns
    -------
    x : ndarray
    info : dict with 'iterations', 'relres', 'converged'
    """
    n = len(b)
    maxiter = maxiter or max(100, 2 * int(np.sqrt(n)) + 200)
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A @ x if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), {"iterations": 0, "relres": 0.0, "converged": True}
    z = M(r) if M else r
    p = z.copy()
    rz = r @ z
    it = 0
    res = np.linalg.norm(r) / bnorm
    while res > rtol and it < maxiter:
        Ap = A @ p
        pAp = p @ Ap
        if not pAp > 0:
            raise NegativeCurvature(f"negative curvature direction in CG (p^T A p = {pAp:.3e})")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        it += 1
        if res <= rtol:
            break
        z = M(r) if M else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, {"iterations": it, "relres": float(res), "converged": bool(res <= rtol)}


def solve_spd(A, b, kind="amg", rtol=1e-12, x0=None):
    """Solve ``A x = b``; falls back to a sparse direct solve if PCG stalls."""
    if kind == "direct":
        x = spla.spsolve(sp.csc_matrix(A), b)
        return x, {"iterations": 0, "relres": float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)),
                   "converged": True, "method": "direct"}
    M = make_preconditioner(A, kind)
    x, info = pcg(A, b, M=M, x0=x0, rtol=rtol)
    info["method"] = f"pcg-{kind}"
    if not info["converged"]:
        x = spla.spsolve(sp.csc_matrix(A), b)
        info = {"iterations": info["iterations"], "relres": float(np.linalg.norm(A @ x - b) / np.linalg.norm(b)),
                "converged": True, "method": "direct-fallback"}
    return x, info
