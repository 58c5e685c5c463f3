"""Pure numpy implementation of the integrand kernels.

Used when the compiled extension is unavailable (or ``EML_PURE_PYTHON=1``).
The signature and results match ``emlab._kernels.eval_batch``.
"""
import numpy as np

POWER, PERTURBED, GPOWER = 0, 1, 2

_CHUNK = 4096


def _base(code, p, e, A, X, order):
    # X has shape (..., n); returns f, Df, D2f at every point of X.
    n = X.shape[-1]
    eye = np.eye(n)
    f = g = h = None
    if code == GPOWER:
        AX = X @ A.T
        q = np.einsum("...i,...i->...", X, AX)
        pos = q > 0
        qs = np.where(pos, q, 1.0)
        gp2 = np.where(pos, qs ** (0.5 * (p - 2.0)), 0.0)
        f = gp2 * q
        if order >= 1:
            g = (p * gp2)[..., None] * AX
        if order >= 2:
            h = (p * gp2)[..., None, None] * A
            h = h + (p * (p - 2.0) * gp2 / qs)[..., None, None] * (AX[..., :, None] * AX[..., None, :])
            if p == 2.0:
                h = np.where(pos[..., None, None], h, 2.0 * A)
        return f, g, h

    r2 = np.einsum("...i,...i->...", X, X)
    pos = r2 > 0
    r2s = np.where(pos, r2, 1.0)
    r = np.sqrt(r2s)
    rp2 = np.where(pos, r ** (p - 2.0), 0.0)
    f = rp2 * r2
    if order >= 1:
        g = (p * rp2)[..., None] * X
    if order >= 2:
        outer = X[..., :, None] * X[..., None, :]
        h = (p * rp2)[..., None, None] * (eye + (p - 2.0) * outer / r2s[..., None, None])
        if p == 2.0:
            h = np.where(pos[..., None, None], h, 2.0 * eye)
    if code == PERTURBED:
        x0 = X[..., 0]
        rp1 = np.where(pos, r ** (p - 1.0), 0.0)
        rp3 = rp1 / r2s
        f = f + e * x0 * rp1
        if order >= 1:
            dg = ((p - 1.0) * x0 * rp3)[..., None] * X
            dg[..., 0] += rp1
            g = g + e * dg
        if order >= 2:
            rp5 = rp3 / r2s
            e0 = np.zeros(n)
            e0[0] = 1.0
            cross = X[..., :, None] * e0 + e0[:, None] * X[..., None, :]
            dh = rp3[..., None, None] * cross
            dh = dh + (x0 * rp3)[..., None, None] * eye
            dh = dh + ((p - 3.0) * x0 * rp5)[..., None, None] * outer
            h = h + (e * (p - 1.0)) * dh
    return f, g, h


def eval_batch(code, p, e, A, G, Y, W, order):
    """Weighted average of f, Df, D2f over the shifted points ``G - Y``."""
    G = np.ascontiguousarray(G, dtype=float)
    N, n = G.shape
    A = np.ascontiguousarray(A, dtype=float)
    F = np.zeros(N)
    DF = np.zeros((N, n)) if order >= 1 else None
    H = np.zeros((N, n, n)) if order >= 2 else None
    for lo in range(0, N, _CHUNK):
        hi = min(N, lo + _CHUNK)
        X = G[lo:hi, None, :] - Y[None, :, :]
        f, g, h = _base(code, p, e, A, X, order)
        F[lo:hi] = f @ W
        if order >= 1:
            DF[lo:hi] = np.einsum("cqi,q->ci", g, W)
        if order >= 2:
            H[lo:hi] = np.einsum("cqij,q->cij", h, W)
    return F, DF, H
