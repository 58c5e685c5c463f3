"""Backend selection for the integrand kernels.

The compiled ``emlab._kernels`` module is used when it imports; otherwise the
numpy version in ``emlab._kernels_py``.  Setting ``EML_PURE_PYTHON=1`` forces
the fallback.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels_py

POWER, PERTURBED, GPOWER = _kernels_py.POWER, _kernels_py.PERTURBED, _kernels_py.GPOWER

_compiled = None
if os.environ.get("EML_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def backends():
    """Available backend names, the active one first."""
    names = [BACKEND]
    if BACKEND == "compiled":
        names.append("python")
    return names


def _impl(backend):
    if backend is None:
        backend = BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled.eval_batch
    if backend == "python":
        return _kernels_py.eval_batch
    raise ValueError(f"unknown backend {backend!r}")


def eval_batch(code, p, e, A, G, Y, W, order, workers=1, backend=None):
    """Evaluate the averaged integrand at every row of ``G``.

    Rows are split into ``workers`` contiguous blocks of a fixed partition, so
    results are identical for any worker count.
    """
    fn = _impl(backend)
    G = np.ascontiguousarray(G, dtype=float)
    N = G.shape[0]
    if workers <= 1 or N < 2 * workers:
        return fn(code, float(p), float(e), A, G, Y, W, int(order))
    bounds = np.linspace(0, N, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(
            lambda ab: fn(code, float(p), float(e), A, G[ab[0]:ab[1]], Y, W, int(order)),
            zip(bounds[:-1], bounds[1:])))
    F = np.concatenate([q[0] for q in parts])
    DF = np.concatenate([q[1] for q in parts]) if order >= 1 else None
    H = np.concatenate([q[2] for q in parts]) if order >= 2 else None
    return F, DF, H
