"""Simplicial meshes of S minus the generation-m Cantor cubes, and of annuli.

Cantor meshes are built from a 2:1 balanced quadtree (n=2) or octree (n=3)
on a reference geometry with every ratio equal to 1/4.  In that geometry all
cube faces lie on dyadic coordinates, so tree cells never straddle a face and
the inner boundary is exact.  Cells are tracked in integer lattice units.
Each leaf is split into simplices by a fan from its centre, so hanging nodes
become ordinary vertices.  A separable piecewise-linear axis map then sends
reference cube endpoints to the true ones.  Such a map preserves element
orientation, because every simplex has a facet on an axis-aligned cell face.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cantor import CantorSpec, CantorTree
from .errors import InvalidArgument, ResourceError

INTERIOR, OUTER, INNER = 0, 1, 2
REF_RATIO = 0.25
MAX_ASPECT = 6.0


@dataclass(frozen=True)
class RefinementPolicy:
    """Mesh resolution controls.

    Parameters
    ----------
    q_min : int
        Minimum number of mesh edges along each side of a generation-m cube;
        rounded up to a power of two.
    grade : float
        Cells are split while diameter > grade * distance to the cubes.
    h_max : float
        Largest allowed cell side (reference coordinates).
    vertex_cap : int
        Resource budget; exceeding it raises ResourceError.
    uniform_h : float, optional
        If set, every cell has this side (a power of two no larger than the
        generation-m cube side); grading is ignored.
    """

    q_min: int = 4
    grade: float = 0.5
    h_max: float = 0.125
    vertex_cap: int = 1_500_000
    uniform_h: Optional[float] = None

    def __post_init__(self):
        if int(self.q_min) < 1:
            raise InvalidArgument("q_min must be >= 1")
        if not self.grade > 0:
            raise InvalidArgument("grade must be positive")
        if not 0 < self.h_max <= 1:
            raise InvalidArgument("h_max must lie in (0, 1]")
        if int(self.vertex_cap) < 4:
            raise InvalidArgument("vertex_cap too small")
        if self.uniform_h is not None:
            lg = math.log2(self.uniform_h)
            if not (0 < self.uniform_h <= 0.5 and lg == round(lg)):
                raise InvalidArgument("uniform_h must be 2^-k with k >= 1")

    @property
    def q(self):
        return 1 << max(0, math.ceil(math.log2(int(self.q_min))))

    @classmethod
    def from_config(cls, cfg):
        keys = ("q_min", "grade", "h_max", "vertex_cap", "uniform_h")
        return cls(**{k: cfg[k] for k in keys if k in cfg and cfg[k] is not None})


@dataclass
class Mesh:
    """Conforming simplicial mesh with boundary tags.

    Attributes
    ----------
    n : int
    vertices : (V, n) float array
    cells : (C, n+1) int array, positively oriented
    tags : (V,) int array, INTERIOR, OUTER or INNER
    owner : (V,) int array, generation-m cube index for INNER vertices, else -1
    kind : str, 'cantor' or 'annulus'
    meta : dict
    """

    n: int
    vertices: np.ndarray
    cells: np.ndarray
    tags: np.ndarray
    owner: np.ndarray
    kind: str = "cantor"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for a in (self.vertices, self.cells, self.tags, self.owner):
            a.setflags(write=False)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    def signed_volumes(self):
        X = self.vertices[self.cells]
        D = X[:, 1:, :] - X[:, :1, :]
        return np.linalg.det(D) / math.factorial(self.n)

    def volumes(self):
        return np.abs(self.signed_volumes())

    def edges(self):
        """Unique undirected edges as a sorted (E, 2) array."""
        k = self.n + 1
        pairs = [(a, b) for a in range(k) for b in range(a + 1, k)]
        E = np.concatenate([self.cells[:, [a, b]] for a, b in pairs])
        E.sort(axis=1)
        return np.unique(E, axis=0)

    def faces(self):
        """Unique triangular faces (3D only)."""
        tri = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        F = np.concatenate([self.cells[:, list(t)] for t in tri])
        F.sort(axis=1)
        return np.unique(F, axis=0)

    def euler_characteristic(self):
        V, E = self.num_vertices, len(self.edges())
        if self.n == 2:
            return V - E + self.num_cells
        return V - E + len(self.faces()) - self.num_cells

    def edge_lengths(self):
        X = self.vertices[self.cells]
        k = self.n + 1
        return np.stack([np.linalg.norm(X[:, a] - X[:, b], axis=1)
                         for a in range(k) for b in range(a + 1, k)], axis=1)

    def diameters(self):
        return self.edge_lengths().max(axis=1)

    def aspect_ratios(self):
        """Longest edge over the inradius, scaled so regular simplices give 1."""
        L = self.edge_lengths()
        vol = self.volumes()
        if self.n == 2:
            inr = 2.0 * vol / L.sum(axis=1)
            return L.max(axis=1) / (2.0 * math.sqrt(3.0) * inr)
        X = self.vertices[self.cells]
        area = 0.0
        for t in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]:
            a, b, c = X[:, t[0]], X[:, t[1]], X[:, t[2]]
            area = area + 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
        inr = 3.0 * vol / area
        return L.max(axis=1) / (2.0 * math.sqrt(6.0) * inr)

    @property
    def h_min(self):
        return float(self.diameters().min())

    @property
    def h_max(self):
        return float(self.diameters().max())

    def boundary_facets(self):
        """Facets on exactly one cell, with tag (OUTER/INNER) and owner.

        Returns
        -------
        facets : (B, n) int array
        tag : (B,) int array; -1 where the vertices disagree
        owner : (B,) int array
        """
        k = self.n + 1
        combos = [tuple(i for i in range(k) if i != skip) for skip in range(k)]
        F = np.concatenate([self.cells[:, list(c)] for c in combos])
        F.sort(axis=1)
        uniq, counts = np.unique(F, axis=0, return_counts=True)
        bnd = uniq[counts == 1]
        t, o = self.tags[bnd], self.owner[bnd]
        tag = np.full(len(bnd), -1)
        outer = np.all(t == OUTER, axis=1)
        inner = np.all(t == INNER, axis=1) & np.all(o == o[:, :1], axis=1)
        tag[outer] = OUTER
        tag[inner] = INNER
        owner = np.where(inner, o[:, 0], -1)
        return bnd, tag, owner

    def summary(self):
        return {"kind": self.kind, "n": self.n, "vertices": self.num_vertices,
                "cells": self.num_cells, "h_min": self.h_min, "h_max": self.h_max,
                "max_aspect": float(self.aspect_ratios().max()),
                "inner_vertices": int(np.sum(self.tags == INNER)),
                "outer_vertices": int(np.sum(self.tags == OUTER)), **self.meta}

    # -- text export ----------------------------------------------------
    def write(self, path):
        """Write VERTICES / CELLS / TAGS sections, coordinates in repr form."""
        with open(path, "w") as fh:
            fh.write(f"EMLAB-MESH 1\nDIM {self.n}\nKIND {self.kind}\n")
            fh.write(f"VERTICES {self.num_vertices}\n")
            for v in self.vertices:
                fh.write(" ".join(repr(float(x)) for x in v) + "\n")
            fh.write(f"CELLS {self.num_cells}\n")
            for c in self.cells:
                fh.write(" ".join(str(int(i)) for i in c) + "\n")
            fh.write(f"TAGS {self.num_vertices}\n")
            for t, o in zip(self.tags, self.owner):
                fh.write(f"{int(t)} {int(o)}\n")

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            lines = fh.read().split("\n")
        if not lines[0].startswith("EMLAB-MESH"):
            raise InvalidArgument(f"{path} is not a mesh file")
        n = int(lines[1].split()[1])
        kind = lines[2].split()[1]
        pos = 3

        def section(name, dtype):
            nonlocal pos
            head = lines[pos].split()
            if head[0] != name:
                raise InvalidArgument(f"expected section {name}, found {head[0]}")
            cnt = int(head[1])
            rows = lines[pos + 1:pos + 1 + cnt]
            pos += 1 + cnt
            return np.array([[dtype(x) for x in r.split()] for r in rows], dtype=dtype).reshape(cnt, -1)

        V = section("VERTICES", float)
        C = section("CELLS", int)
        T = section("TAGS", int)
        return cls(n=n, vertices=V, cells=C, tags=T[:, 0].copy(), owner=T[:, 1].copy(), kind=kind)


# ---------------------------------------------------------------------------
# Cantor meshes


def _ref_intervals(m, N):
    """Generation-m reference intervals in lattice units on [0, N]."""
    lo = np.array([N // 4], dtype=np.int64)
    side = N // 2
    for _ in range(m):
        child = side // 4
        lo = np.concatenate([lo, lo + side - child])
        side = child
    lo.sort()
    return lo, lo + side


def _axis_stats(lo, hi, Elo, Ehi):
    """Per-axis distance, interior overlap and containment of [lo, hi] in E."""
    n_before_hi = np.searchsorted(Elo, hi, side="left")
    n_end_le_lo = np.searchsorted(Ehi, lo, side="right")
    overlap = n_before_hi > n_end_le_lo
    idx = np.searchsorted(Elo, lo, side="right") - 1
    idc = np.clip(idx, 0, len(Elo) - 1)
    inside = (idx >= 0) & (Ehi[idc] >= hi) & (Elo[idc] <= lo)
    # distance: gap to the last interval starting at or before hi and the next one
    j = np.searchsorted(Elo, hi, side="right") - 1
    jc = np.clip(j, 0, len(Elo) - 1)
    left_gap = np.where(j >= 0, np.maximum(lo - Ehi[jc], 0), np.iinfo(np.int64).max)
    jn = np.clip(j + 1, 0, len(Elo) - 1)
    right_gap = np.where(j + 1 < len(Elo), np.maximum(Elo[jn] - hi, 0), np.iinfo(np.int64).max)
    dist = np.minimum(left_gap, right_gap)
    return dist, overlap, inside


def _classify(corner, size, Elo, Ehi):
    n = corner.shape[1]
    d2 = np.zeros(len(corner))
    overlap = np.ones(len(corner), dtype=bool)
    inside = np.ones(len(corner), dtype=bool)
    for d in range(n):
        dist, ov, ins = _axis_stats(corner[:, d], corner[:, d] + size, Elo, Ehi)
        d2 += dist.astype(float) ** 2
        overlap &= ov
        inside &= ins
    return np.sqrt(d2), overlap, inside


def _offsets(n, values):
    g = np.meshgrid(*([np.asarray(values)] * n), indexing="ij")
    return np.stack([x.ravel() for x in g], axis=1).astype(np.int64)


class _KeyCodec:
    def __init__(self, N, n):
        self.base = np.int64(N + 1)
        self.n = n

    def encode(self, X):
        X = np.asarray(X, dtype=np.int64)
        k = np.zeros(X.shape[:-1], dtype=np.int64)
        for d in reversed(range(self.n)):
            k = k * self.base + X[..., d]
        return k

    def decode(self, k):
        out = np.empty(k.shape + (self.n,), dtype=np.int64)
        k = k.copy()
        for d in range(self.n):
            out[..., d] = k % self.base
            k //= self.base
        return out


def _refine(n, N, Elo, Ehi, policy, h_face_units, cap):
    """Breadth-first refinement; returns {size: corners} for every tree node."""
    nodes = {}
    corner = np.zeros((1, n), dtype=np.int64)
    size = N
    h_max_units = policy.h_max * N
    kids = _offsets(n, [0, 1])
    leaves = 0
    while len(corner):
        nodes[size] = corner
        dist, overlap, inside = _classify(corner, size, Elo, Ehi)
        if policy.uniform_h is not None:
            split = size > policy.uniform_h * N
        else:
            graded = (math.sqrt(n) * size > policy.grade * dist) | (dist == 0)
            split = (size > h_face_units) & graded
            split |= size > h_max_units
        split |= overlap & ~inside
        split &= ~inside
        leaves += int(np.sum(~split & ~inside))
        if leaves > cap:
            raise ResourceError(f"refinement exceeds the vertex cap ({leaves} cells > {cap})", attempted=leaves)
        parents = corner[split]
        half = size // 2
        corner = (parents[:, None, :] + half * kids[None, :, :]).reshape(-1, n)
        size = half
        if len(corner) and size < 2:
            raise AssertionError("refinement below the lattice resolution")
    return nodes


def _balance(nodes, n, N, codec):
    """Add tree nodes until neighbouring leaves differ by at most a factor 2."""
    keys = {s: np.unique(codec.encode(c)) for s, c in nodes.items()}
    dirs = _offsets(n, [-1, 0, 1])
    dirs = dirs[np.any(dirs != 0, axis=1)]
    kids = _offsets(n, [0, 1])
    sizes = sorted(keys)
    s = sizes[0]
    while s < N:
        big = 2 * s
        cur = codec.decode(keys.get(s, np.zeros(0, np.int64)))
        if len(cur):
            par = np.unique(codec.encode((cur // big) * big))
            pc = codec.decode(par)
            nb = (pc[:, None, :] + big * dirs[None, :, :]).reshape(-1, n)
            ok = np.all((nb >= 0) & (nb + big <= N), axis=1)
            need = np.unique(codec.encode(nb[ok]))
            have = keys.get(big, np.zeros(0, np.int64))
            new = np.setdiff1d(need, have, assume_unique=True)
            # every new node of size `big` forces its parent to split
            size_up = big
            while len(new):
                keys[size_up] = np.union1d(keys.get(size_up, np.zeros(0, np.int64)), new)
                if size_up >= N:
                    break
                up = 2 * size_up
                pcs = (codec.decode(new) // up) * up
                sib = (pcs[:, None, :] + size_up * kids[None, :, :]).reshape(-1, n)
                keys[size_up] = np.union1d(keys[size_up], codec.encode(sib))
                parents = np.unique(codec.encode(pcs))
                new = np.setdiff1d(parents, keys.get(up, np.zeros(0, np.int64)), assume_unique=True)
                size_up = up
        s = big
    return keys


def _leaves(keys, codec, n):
    """Tree nodes of each size that have no children."""
    out = {}
    for s in sorted(keys):
        k = keys[s]
        child_keys = keys.get(s // 2)
        if child_keys is None:
            out[s] = k
            continue
        first_child = codec.decode(child_keys)
        par = np.unique(codec.encode((first_child // s) * s))
        out[s] = np.setdiff1d(k, par, assume_unique=True)
    return out


def _fan_2d(C, S, corner_keys, codec):
    cc = C + S[:, None] // 2
    quad = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.int64)
    tris = []
    for e in range(4):
        a = C + S[:, None] * quad[e]
        b = C + S[:, None] * quad[(e + 1) % 4]
        mid = (a + b) // 2
        present = np.isin(codec.encode(mid), corner_keys)
        ka, kb, km, kc = (codec.encode(x) for x in (a, b, mid, cc))
        tris.append(np.stack([kc[~present], ka[~present], kb[~present]], axis=1))
        tris.append(np.stack([kc[present], ka[present], km[present]], axis=1))
        tris.append(np.stack([kc[present], km[present], kb[present]], axis=1))
    return np.concatenate(tris)


def _fan_3d(C, S, corner_keys, codec):
    cc = codec.encode(C + S[:, None] // 2)
    tets = []
    ring = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.int64)
    for d in range(3):
        u, v = [a for a in range(3) if a != d]
        for side in (0, 1):
            base = C.copy()
            base[:, d] += side * S
            fc = base.copy()
            fc[:, u] += S // 2
            fc[:, v] += S // 2
            split = np.isin(codec.encode(fc), corner_keys)
            squares = []  # (origin, size, owner centre key)
            if np.any(~split):
                squares.append((base[~split], S[~split], cc[~split]))
            if np.any(split):
                for du in (0, 1):
                    for dv in (0, 1):
                        o = base[split].copy()
                        h = S[split] // 2
                        o[:, u] += du * h
                        o[:, v] += dv * h
                        squares.append((o, h, cc[split]))
            for o, t, ck in squares:
                sc = o.copy()
                sc[:, u] += t // 2
                sc[:, v] += t // 2
                ks = codec.encode(sc)
                for e in range(4):
                    a = o.copy()
                    a[:, u] += t * ring[e, 0]
                    a[:, v] += t * ring[e, 1]
                    b = o.copy()
                    b[:, u] += t * ring[(e + 1) % 4, 0]
                    b[:, v] += t * ring[(e + 1) % 4, 1]
                    mid = (a + b) // 2
                    km = codec.encode(mid)
                    present = np.isin(km, corner_keys)
                    ka, kb = codec.encode(a), codec.encode(b)
                    P, Q = present, ~present
                    tets.append(np.stack([ck[Q], ks[Q], ka[Q], kb[Q]], axis=1))
                    tets.append(np.stack([ck[P], ks[P], ka[P], km[P]], axis=1))
                    tets.append(np.stack([ck[P], ks[P], km[P], kb[P]], axis=1))
    return np.concatenate(tets)


def axis_breakpoints(spec: CantorSpec):
    """Matching reference and true endpoints of all 1D Cantor intervals."""
    ref_c, true_c = [0.0], [0.0]
    ref_s, true_s = 0.5, 0.5
    ref_pts, true_pts = [-0.5, -0.25, 0.25, 0.5], [-0.5, -0.25, 0.25, 0.5]
    for a in spec.ratios:
        rchild, tchild = ref_s * REF_RATIO, true_s * a
        roff, toff = 0.5 * (ref_s - rchild), 0.5 * (true_s - tchild)
        ref_c = [c + s * roff for c in ref_c for s in (-1, 1)]
        true_c = [c + s * toff for c in true_c for s in (-1, 1)]
        ref_s, true_s = rchild, tchild
        for rc, tc in zip(ref_c, true_c):
            ref_pts += [rc - 0.5 * ref_s, rc + 0.5 * ref_s]
            true_pts += [tc - 0.5 * true_s, tc + 0.5 * true_s]
    order = np.argsort(ref_pts)
    return np.array(ref_pts)[order], np.array(true_pts)[order]


def generate(tree: CantorTree, policy: RefinementPolicy = RefinementPolicy()) -> Mesh:
    """Mesh of S = [-1/2, 1/2]^n minus the generation-m cubes of ``tree``.

    Raises
    ------
    ResourceError
        If the mesh would exceed ``policy.vertex_cap`` vertices.
    """
    n, m = tree.n, tree.m
    s_m_ref = 0.5 * REF_RATIO ** m
    if policy.uniform_h is not None:
        if policy.uniform_h > s_m_ref:
            raise InvalidArgument(f"uniform_h={policy.uniform_h} exceeds the cube side {s_m_ref}")
        h_fine = policy.uniform_h
    else:
        h_fine = s_m_ref / policy.q
    N = int(round(2.0 / h_fine))  # lattice unit is half the finest cell side
    codec = _KeyCodec(N, n)
    Elo, Ehi = _ref_intervals(m, N)
    cap = int(policy.vertex_cap)
    nodes = _refine(n, N, Elo, Ehi, policy, int(round(h_fine * N)), cap)
    keys = _balance(nodes, n, N, codec)
    leaf_keys = _leaves(keys, codec, n)
    C_list, S_list = [], []
    for s, k in leaf_keys.items():
        if len(k):
            C_list.append(codec.decode(k))
            S_list.append(np.full(len(k), s, dtype=np.int64))
    C = np.concatenate(C_list)
    S = np.concatenate(S_list)
    inside = np.ones(len(C), dtype=bool)
    for d in range(n):
        inside &= _axis_stats(C[:, d], C[:, d] + S, Elo, Ehi)[2]
    C, S = C[~inside], S[~inside]

    corners = _offsets(n, [0, 1])
    corner_keys = np.unique(codec.encode(C[:, None, :] + S[:, None, None] * corners[None]))
    est = len(corner_keys) + len(C) * (1 if n == 2 else 4)
    if est > cap:
        raise ResourceError(f"mesh needs about {est} vertices, cap is {cap}", attempted=est)
    if n == 2:
        cells_k = _fan_2d(C, S, corner_keys, codec)
    else:
        cells_k = _fan_3d(C, S, corner_keys, codec)
    vkeys, cells = np.unique(cells_k, return_inverse=True)
    cells = cells.reshape(cells_k.shape)
    if len(vkeys) > cap:
        raise ResourceError(f"mesh has {len(vkeys)} vertices, cap is {cap}", attempted=len(vkeys))
    lat = codec.decode(vkeys)
    ref = -0.5 + lat / N

    # tags in exact lattice arithmetic
    tags = np.zeros(len(lat), dtype=np.int64)
    outer = np.any((lat == 0) | (lat == N), axis=1)
    on_e = np.ones(len(lat), dtype=bool)
    for d in range(n):
        idx = np.searchsorted(Elo, lat[:, d], side="right") - 1
        idc = np.clip(idx, 0, len(Elo) - 1)
        on_e &= (idx >= 0) & (lat[:, d] <= Ehi[idc])
    tags[outer] = OUTER
    tags[on_e] = INNER
    ref_tree = CantorTree(CantorSpec.constant(n, REF_RATIO, m))
    owner = np.full(len(lat), -1, dtype=np.int64)
    if np.any(on_e):
        owner[on_e] = ref_tree.locate(ref[on_e], m)
        if np.any(owner[on_e] < 0):
            raise AssertionError("inner vertex not located on a cube")

    if all(a == REF_RATIO for a in tree.spec.ratios):
        X = ref
    else:
        rp, tp = axis_breakpoints(tree.spec)
        X = np.stack([np.interp(ref[:, d], rp, tp) for d in range(n)], axis=1)

    # orient positively
    D = X[cells[:, 1:]] - X[cells[:, :1]]
    neg = np.linalg.det(D) < 0
    cells[neg, 1], cells[neg, 2] = cells[neg, 2].copy(), cells[neg, 1].copy()

    meta = {"m": m, "q": policy.q, "grade": policy.grade, "h_max_policy": policy.h_max,
            "uniform_h": policy.uniform_h, "leaves": int(len(C))}
    return Mesh(n=n, vertices=X, cells=cells.astype(np.int64), tags=tags, owner=owner, kind="cantor", meta=meta)


# ---------------------------------------------------------------------------
# Annulus meshes


def annulus_mesh(r_inner: float, r_outer: float, h: float, radii: str = "geometric") -> Mesh:
    """Polar mesh of r_inner < |x| < r_outer with spacing at most h.

    The angular count is fixed across rings so that the outer circle has
    spacing at most h.  With ``radii="geometric"`` the radii grow by a
    constant factor matched to the angular step, so every ring is a scaled
    copy of the previous one; radial profiles that are p-harmonic are then
    reproduced exactly at the nodes.  ``radii="uniform"`` uses equal radial
    steps of at most h, which breaks that similarity and leaves an O(h^2)
    nodal error.  Each annular quad is split along the same diagonal.
    """
    r, R = float(r_inner), float(r_outer)
    if not (0 < r < R):
        raise InvalidArgument("need 0 < r_inner < r_outer")
    if not (0 < h < 0.5 * (R - r)):
        raise InvalidArgument(f"h must lie in (0, (r_outer - r_inner)/2), got {h}")
    nt = max(8, math.ceil(2 * math.pi * R / h))
    if radii == "geometric":
        nr = max(2, math.ceil(math.log(R / r) / (2 * math.pi / nt)))
        rad = r * (R / r) ** (np.arange(nr + 1) / nr)
    elif radii == "uniform":
        nr = max(2, math.ceil((R - r) / h))
        rad = r + (R - r) * np.arange(nr + 1) / nr
    else:
        raise InvalidArgument(f"radii must be 'geometric' or 'uniform', got {radii!r}")
    rad[0], rad[-1] = r, R
    th = 2 * math.pi * np.arange(nt) / nt
    X = (rad[:, None, None] * np.stack([np.cos(th), np.sin(th)], axis=1)[None]).reshape(-1, 2)
    idx = np.arange((nr + 1) * nt).reshape(nr + 1, nt)
    a = idx[:-1, :]
    b = np.roll(idx[:-1, :], -1, axis=1)
    c = np.roll(idx[1:, :], -1, axis=1)
    d = idx[1:, :]
    cells = np.concatenate([np.stack([a, c, b], -1).reshape(-1, 3), np.stack([a, d, c], -1).reshape(-1, 3)])
    tags = np.zeros(len(X), dtype=np.int64)
    tags[idx[0]] = INNER
    tags[idx[-1]] = OUTER
    owner = np.where(tags == INNER, 0, -1)
    meta = {"r_inner": r, "r_outer": R, "h": h, "radii": radii, "n_theta": nt, "n_r": nr}
    return Mesh(n=2, vertices=X, cells=cells, tags=tags, owner=owner, kind="annulus", meta=meta)
