"""Piecewise-linear finite element operators on a simplicial mesh.

Gradients are constant per cell, so the energy sum_c |c| f(grad u_c) needs
no quadrature.  The Hessian sparsity pattern restricted to free nodes is
fixed, so assembly reduces to one ``bincount`` through a precomputed map.
"""
import numpy as np
import scipy.sparse as sp

from .mesh import INTERIOR


class FESpace:
    """P1 operators for ``mesh`` with Dirichlet nodes at every tagged vertex."""

    def __init__(self, mesh, free=None):
        self.mesh = mesh
        n = mesh.n
        cells = mesh.cells
        C, k = cells.shape
        X = mesh.vertices[cells]
        P = np.concatenate([np.ones((C, k, 1)), X], axis=2)
        Pinv = np.linalg.inv(P)
        self.B = np.ascontiguousarray(Pinv[:, 1:, :])  # (C, n, n+1): grad of barycentrics
        self.vol = np.abs(np.linalg.det(P)) / np.prod(np.arange(1, n + 1))
        rows = (np.arange(C)[:, None, None] * n + np.arange(n)[None, :, None]) * np.ones((1, 1, k), dtype=np.int64)
        cols = np.broadcast_to(cells[:, None, :], (C, n, k))
        V = mesh.num_vertices
        self.D = sp.csr_matrix((self.B.ravel(), (rows.ravel(), cols.ravel())), shape=(C * n, V))
        self.DT = self.D.T.tocsr()
        self.free = (mesh.tags == INTERIOR) if free is None else np.asarray(free, dtype=bool)
        self.free_idx = np.flatnonzero(self.free)
        fmap = np.full(V, -1, dtype=np.int64)
        fmap[self.free_idx] = np.arange(len(self.free_idx))
        self.fmap = fmap
        self._pattern()

    def _pattern(self):
        cells = self.mesh.cells
        k = cells.shape[1]
        fr = self.fmap[cells]
        R = np.repeat(fr[:, :, None], k, axis=2)
        Cc = np.repeat(fr[:, None, :], k, axis=1)
        mask = (R >= 0) & (Cc >= 0)
        nf = len(self.free_idx)
        key = R[mask] * nf + Cc[mask]
        uniq, inv = np.unique(key, return_inverse=True)
        self._mask = mask
        self._inv = inv
        self._nnz = len(uniq)
        r = uniq // nf
        c = uniq % nf
        indptr = np.zeros(nf + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        self._indptr = np.cumsum(indptr)
        self._indices = c
        self._nf = nf

    @property
    def num_free(self):
        return self._nf

    def gradients(self, u):
        """Cellwise gradients, shape (C, n)."""
        return (self.D @ u).reshape(-1, self.mesh.n)

    def load(self, flux):
        """Vector of int <flux, grad phi_i> over all vertices i, flux given per cell."""
        return self.DT @ (self.vol[:, None] * flux).ravel()

    def stiffness_free(self, H):
        """Free-free block of sum_c |c| B_c^T H_c B_c as a CSR matrix."""
        loc = np.einsum("cia,cij,cjb->cab", self.B, H, self.B, optimize=True) * self.vol[:, None, None]
        data = np.bincount(self._inv, weights=loc[self._mask], minlength=self._nnz)
        return sp.csr_matrix((data, self._indices, self._indptr), shape=(self._nf, self._nf))

    def stiffness_full(self, H):
        """Full sum_c |c| B_c^T H_c B_c (unrestricted), as CSR."""
        cells = self.mesh.cells
        k = cells.shape[1]
        loc = np.einsum("cia,cij,cjb->cab", self.B, H, self.B, optimize=True) * self.vol[:, None, None]
        R = np.repeat(cells[:, :, None], k, axis=2)
        Cc = np.repeat(cells[:, None, :], k, axis=1)
        V = self.mesh.num_vertices
        return sp.csr_matrix((loc.ravel(), (R.ravel(), Cc.ravel())), shape=(V, V))

    def recover_gradients(self, G):
        """Nodal gradients as volume-weighted averages of adjacent cell gradients."""
        cells = self.mesh.cells
        V, n = self.mesh.num_vertices, self.mesh.n
        w = np.repeat(self.vol, cells.shape[1])
        idx = cells.ravel()
        den = np.bincount(idx, weights=w, minlength=V)
        out = np.empty((V, n))
        for d in range(n):
            out[:, d] = np.bincount(idx, weights=w * np.repeat(G[:, d], cells.shape[1]), minlength=V)
        return out / np.where(den > 0, den, 1.0)[:, None]
