# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled integrand kernels.

``eval_batch`` returns the quadrature-weighted averages of f and its first two derivatives over
the points ``G[c] - Y[q]``; with a single zero shift and unit weight it is
the bare integrand.  Loops run without the GIL so callers may split ``G``
across threads.
"""
import numpy as np
from libc.math cimport sqrt, pow

cdef enum:
    POWER = 0
    PERTURBED = 1
    GPOWER = 2


cdef inline double _xpow(double r, double ex, int mode, int k) noexcept nogil:
    # r**ex with fast paths: mode 1 for integer ex = k, mode 2 for ex = k + 1/2
    cdef double out = 1.0
    cdef int i
    if mode == 0:
        return pow(r, ex)
    for i in range(k):
        out *= r
    if mode == 2:
        out *= sqrt(r)
    return out


cdef inline void _exponent_mode(double ex, int* mode, int* k) noexcept nogil:
    cdef double twice = 2.0 * ex
    if ex >= 0.0 and ex <= 16.0 and twice == <double> (<int> twice):
        k[0] = <int> (twice / 2)
        mode[0] = 1 if (<int> twice) % 2 == 0 else 2
    else:
        mode[0] = 0
        k[0] = 0


cdef inline void _base(int code, double p, double e, const double[:, ::1] A, int n,
                       const double* x, int order, double* f, double* g, double* h,
                       int mode, int k) noexcept nogil:
    cdef int i, j
    cdef double r2 = 0.0, r, rp2, rp1, rp3, rp5, x0, q, gp2
    cdef double ax[3]
    if code == GPOWER:
        q = 0.0
        for i in range(n):
            ax[i] = 0.0
            for j in range(n):
                ax[i] += A[i, j] * x[j]
            q += x[i] * ax[i]
        if q > 0.0:
            gp2 = _xpow(q, 0.5 * (p - 2.0), mode, k)
            f[0] = gp2 * q
            if order >= 1:
                for i in range(n):
                    g[i] = p * gp2 * ax[i]
            if order >= 2:
                for i in range(n):
                    for j in range(n):
                        h[i * n + j] = p * gp2 * A[i, j] + p * (p - 2.0) * gp2 / q * ax[i] * ax[j]
        else:
            f[0] = 0.0
            for i in range(n):
                g[i] = 0.0
                for j in range(n):
                    h[i * n + j] = 2.0 * A[i, j] if p == 2.0 else 0.0
        return

    for i in range(n):
        r2 += x[i] * x[i]
    if r2 > 0.0:
        r = sqrt(r2)
        rp2 = _xpow(r, p - 2.0, mode, k)
        f[0] = rp2 * r2
        if order >= 1:
            for i in range(n):
                g[i] = p * rp2 * x[i]
        if order >= 2:
            for i in range(n):
                for j in range(n):
                    h[i * n + j] = p * rp2 * ((1.0 if i == j else 0.0) + (p - 2.0) * x[i] * x[j] / r2)
        if code == PERTURBED:
            x0 = x[0]
            rp1 = rp2 * r
            rp3 = rp1 / r2
            f[0] += e * x0 * rp1
            if order >= 1:
                for i in range(n):
                    g[i] += e * ((rp1 if i == 0 else 0.0) + (p - 1.0) * x0 * rp3 * x[i])
            if order >= 2:
                rp5 = rp3 / r2
                for i in range(n):
                    for j in range(n):
                        h[i * n + j] += e * (p - 1.0) * (
                            rp3 * ((x[j] if i == 0 else 0.0) + (x[i] if j == 0 else 0.0))
                            + x0 * rp3 * (1.0 if i == j else 0.0)
                            + (p - 3.0) * x0 * rp5 * x[i] * x[j])
    else:
        f[0] = 0.0
        for i in range(n):
            g[i] = 0.0
            for j in range(n):
                h[i * n + j] = 2.0 if (p == 2.0 and i == j) else 0.0


def eval_batch(int code, double p, double e, A, G, Y, W, int order):
    """Weighted average of f, Df, D2f over the shifted points ``G - Y``."""
    cdef const double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef const double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef const double[::1] Wv = np.ascontiguousarray(W, dtype=np.float64)
    cdef Py_ssize_t N = Gv.shape[0], Q = Yv.shape[0]
    cdef int n = <int> Gv.shape[1]
    if n < 1 or n > 3:
        raise ValueError("dimension must be 1, 2 or 3")
    F_arr = np.zeros(N)
    DF_arr = np.zeros((N, n))
    H_arr = np.zeros((N, n, n))
    cdef double[::1] F = F_arr
    cdef double[:, ::1] DF = DF_arr
    cdef double[:, :, ::1] H = H_arr
    cdef Py_ssize_t c, k
    cdef int i, j
    cdef double x[3]
    cdef double fv, w
    cdef double gv[3]
    cdef double hv[9]
    cdef int mode, kpow
    with nogil:
        _exponent_mode(0.5 * (p - 2.0) if code == GPOWER else p - 2.0, &mode, &kpow)
        for c in range(N):
            for k in range(Q):
                w = Wv[k]
                for i in range(n):
                    x[i] = Gv[c, i] - Yv[k, i]
                _base(code, p, e, Av, n, x, order, &fv, gv, hv, mode, kpow)
                F[c] += w * fv
                if order >= 1:
                    for i in range(n):
                        DF[c, i] += w * gv[i]
                if order >= 2:
                    for i in range(n):
                        for j in range(n):
                            H[c, i, j] += w * hv[i * n + j]
    return F_arr, (DF_arr if order >= 1 else None), (H_arr if order >= 2 else None)
