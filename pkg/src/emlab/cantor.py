"""Corner-cube Cantor sets and queries on their cube tree.

Generation 0 is the cube of side 1/2 centred at the origin.  Each cube of
generation k-1 keeps its 2^n closed corner cubes of side a_k times its own
side, so generation k has 2^(nk) cubes of side a_0 a_1 ... a_k with a_0 = 1/2.

Indexing: the children of cube j are 2^n j + c for c in [0, 2^n), and bit d of
c selects the upper (1) or lower (0) corner along axis d.  The generation-m
descendants of (k, j) are therefore the contiguous block
[j 2^(n(m-k)), (j+1) 2^(n(m-k))).
"""
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np

from .errors import InsufficientDepth, InvalidArgument

A0 = 0.5


@dataclass(frozen=True)
class CantorSpec:
    """Dimension, ratio bounds and the ratio sequence a_1..a_m."""

    n: int
    alpha: float
    beta: float
    ratios: Tuple[float, ...]
    generations: int = field(default=-1)

    def __post_init__(self):
        if self.n not in (2, 3):
            raise InvalidArgument(f"n must be 2 or 3, got {self.n!r}")
        a, b = float(self.alpha), float(self.beta)
        if not (0.0 < a <= b < 0.5):
            raise InvalidArgument(f"need 0 < alpha <= beta < 1/2, got alpha={self.alpha!r}, beta={self.beta!r}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        ratios = tuple(float(r) for r in self.ratios)
        object.__setattr__(self, "ratios", ratios)
        m = len(ratios) if self.generations == -1 else int(self.generations)
        if m < 0 or m != len(ratios):
            raise InvalidArgument(f"generations={self.generations!r} does not match {len(ratios)} ratios")
        object.__setattr__(self, "generations", m)
        for k, r in enumerate(ratios, start=1):
            if not (a <= r <= b):
                raise InvalidArgument(f"ratio a_{k}={r} outside [alpha, beta]=[{a}, {b}]")

    @classmethod
    def constant(cls, n, a, m, alpha=None, beta=None):
        """Constant ratio ``a`` for ``m`` generations; [alpha, beta] defaults to [a, a]."""
        return cls(n=n, alpha=a if alpha is None else alpha, beta=a if beta is None else beta,
                   ratios=(a,) * m, generations=m)

    @classmethod
    def uniform(cls, n, alpha, beta, m, seed):
        """Ratios drawn independently and uniformly from [alpha, beta]."""
        rng = np.random.default_rng(seed)
        return cls(n=n, alpha=alpha, beta=beta, ratios=tuple(rng.uniform(alpha, beta, m)), generations=m)

    @classmethod
    def from_config(cls, cfg):
        """Build from ``{"n", "alpha", "beta", "m", "ratio_mode", "ratio"?, "ratios"?, "seed"?}``."""
        mode = cfg.get("ratio_mode", "constant")
        n, m = cfg["n"], cfg["m"]
        if mode == "constant":
            a = cfg["ratio"]
            return cls.constant(n, a, m, cfg.get("alpha", a), cfg.get("beta", a))
        if mode == "list":
            return cls(n=n, alpha=cfg["alpha"], beta=cfg["beta"], ratios=tuple(cfg["ratios"]), generations=m)
        if mode == "uniform":
            return cls.uniform(n, cfg["alpha"], cfg["beta"], m, cfg.get("seed", 0))
        raise InvalidArgument(f"unknown ratio_mode {mode!r}")

    @property
    def is_constant(self):
        return len(set(self.ratios)) <= 1

    @property
    def theta(self):
        """Dilation margin (1/(100 n)) min(alpha, 1/2 - beta)."""
        return min(self.alpha, 0.5 - self.beta) / (100.0 * self.n)

    def theta_exact(self):
        return min(Fraction(self.alpha), Fraction(1, 2) - Fraction(self.beta)) / (100 * self.n)


@dataclass(frozen=True)
class Cube:
    """One cube Q_{k,j} of the tree."""

    k: int
    j: int
    center: Tuple[float, ...]
    side: float

    @property
    def diameter(self):
        return math.sqrt(len(self.center)) * self.side

    def contains(self, x, dilation=1.0):
        """True if ``x`` lies in the closed ``dilation``-fold dilate."""
        x = np.asarray(x, dtype=float)
        return bool(np.max(np.abs(x - np.asarray(self.center))) <= 0.5 * dilation * self.side)


@dataclass(frozen=True)
class GaugeFunction:
    """The gauge r -> r^d."""

    d: float

    def __post_init__(self):
        if not (float(self.d) > 0):
            raise InvalidArgument("gauge exponent must be positive")

    def __call__(self, r):
        return np.asarray(r, dtype=float) ** self.d


class CantorTree:
    """All cubes of generations 0..m, stored per generation as arrays."""

    def __init__(self, spec: CantorSpec):
        self.spec = spec
        self.n = spec.n
        self.m = spec.generations
        self.branching = 2 ** spec.n
        sides = [A0]
        for a in spec.ratios:
            sides.append(sides[-1] * a)
        self.sides = np.array(sides)
        signs = np.array([[1.0 if (c >> d) & 1 else -1.0 for d in range(self.n)]
                          for c in range(self.branching)])
        self._signs = signs
        centers = [np.zeros((1, self.n))]
        for k in range(1, self.m + 1):
            off = 0.5 * (self.sides[k - 1] - self.sides[k])
            prev = centers[-1]
            centers.append((prev[:, None, :] + off * signs[None, :, :]).reshape(-1, self.n))
        for c in centers:
            c.setflags(write=False)
        self.centers = centers
        self.sides.setflags(write=False)

    # -- counts and lookup ---------------------------------------------
    @property
    def theta(self):
        return self.spec.theta

    def count(self, k):
        return self.branching ** k

    def side(self, k):
        return float(self.sides[k])

    def diameter(self, k):
        return math.sqrt(self.n) * self.side(k)

    def cube(self, k, j):
        self._check_gen(k)
        if not 0 <= j < self.count(k):
            raise InvalidArgument(f"index {j} out of range for generation {k}")
        return Cube(k, int(j), tuple(float(v) for v in self.centers[k][j]), self.side(k))

    def cubes(self, k):
        return [self.cube(k, j) for j in range(self.count(k))]

    def parent(self, j):
        return j >> self.n

    def children(self, k, j):
        self._check_gen(k + 1)
        b = self.branching
        return list(range(b * j, b * j + b))

    def descendants(self, k, j, gen=None):
        """Index range of generation ``gen`` (default m) descendants of (k, j)."""
        gen = self.m if gen is None else gen
        self._check_gen(gen)
        if gen < k:
            raise InvalidArgument("descendant generation precedes the cube")
        w = self.branching ** (gen - k)
        return range(j * w, (j + 1) * w)

    def _check_gen(self, k):
        if not 0 <= k <= self.m:
            raise InvalidArgument(f"generation {k} outside [0, {self.m}]")

    def locate(self, X, k=None, dilation=1.0):
        """Generation-``k`` cube indices for points ``X``, or -1 outside.

        The descent picks the child by the sign of x - center at every level,
        which identifies the only candidate cube whose dilate can contain x
        as long as the dilates are disjoint.
        """
        k = self.m if k is None else k
        self._check_gen(k)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        j = np.zeros(len(X), dtype=np.int64)
        weights = (1 << np.arange(self.n)).astype(np.int64)
        for gen in range(k):
            c = self.centers[gen][j]
            bits = (X > c).astype(np.int64) @ weights
            j = j * self.branching + bits
        inside = np.max(np.abs(X - self.centers[k][j]), axis=1) <= 0.5 * dilation * self.side(k)
        return np.where(inside, j, -1)

    # -- exports --------------------------------------------------------
    def iter_records(self):
        for k in range(self.m + 1):
            s = self.side(k)
            for j, c in enumerate(self.centers[k]):
                yield {"k": k, "j": j, "center": [float(v) for v in c], "side": s}

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.iter_records():
                fh.write(json.dumps(rec) + "\n")


def build(spec: CantorSpec) -> CantorTree:
    """Construct the cube tree of ``spec``."""
    return CantorTree(spec)


def cover_sum(tree: CantorTree, gauge: GaugeFunction, k: int) -> float:
    """Sum of gauge(radius) over balls circumscribing the generation-k cubes."""
    tree._check_gen(k)
    r = 0.5 * tree.diameter(k)
    return float(tree.count(k) * gauge(r))


def content(tree: CantorTree, gauge: GaugeFunction, delta: float) -> float:
    """Upper estimate of the gauge content of C_m at scale ``delta``.

    Uses the covers by generation-k cubes whose diameters are below delta and
    returns the smallest of their circumscribed-ball sums.
    """
    if not delta > 0:
        raise InvalidArgument("delta must be positive")
    ks = [k for k in range(tree.m + 1) if tree.diameter(k) < delta]
    if not ks:
        raise InsufficientDepth(
            f"insufficient depth: generation {tree.m} cubes have diameter {tree.diameter(tree.m):.3g} >= delta={delta}")
    return min(cover_sum(tree, gauge, k) for k in ks)


def similarity_dimension(spec: CantorSpec) -> float:
    """n log 2 / log(1/a) for a constant ratio a."""
    if not spec.ratios:
        raise InvalidArgument("similarity dimension needs at least one ratio")
    if not spec.is_constant:
        raise InvalidArgument("similarity dimension requires a constant ratio sequence")
    return spec.n * math.log(2.0) / math.log(1.0 / spec.ratios[0])


def interval_endpoints_exact(spec: CantorSpec, k: int) -> List[Tuple[Fraction, Fraction]]:
    """Exact centers and sides of the 2^k one-dimensional generation-k intervals, sorted."""
    side = Fraction(1, 2)
    centers = [Fraction(0)]
    for a in spec.ratios[:k]:
        child = side * Fraction(a)
        off = (side - child) / 2
        centers = [c + s * off for c in centers for s in (-1, 1)]
        side = child
    return sorted((c, side) for c in centers)


def dilates_disjoint(spec: CantorSpec, k: int, theta=None) -> bool:
    """Exact test that the (1+theta)-dilates of the generation-k cubes are disjoint.

    Cubes are products of the one-dimensional intervals, so two distinct cubes
    meet exactly when their projections meet on every axis; it suffices to
    check that neighbouring one-dimensional dilates are separated.
    """
    theta = spec.theta_exact() if theta is None else Fraction(theta)
    ivs = interval_endpoints_exact(spec, k)
    half = [(c - (1 + theta) * s / 2, c + (1 + theta) * s / 2) for c, s in ivs]
    return all(hi < lo2 for (_, hi), (lo2, _) in zip(half, half[1:]))


@dataclass
class StoppingCover:
    """Good cubes (mass threshold met) and bad cubes (reached the floor)."""

    good: List[Tuple[int, int]]
    bad: List[Tuple[int, int]]
    M: float
    floor_gen: int

    def cubes(self):
        return sorted(self.good + self.bad)


def generation_masses(mass) -> Sequence[np.ndarray]:
    """Per-generation mass arrays from a BoundaryMeasure or a plain sequence."""
    return mass.levels if hasattr(mass, "levels") else mass


def stopping_cover(tree: CantorTree, mass, M: float, floor_gen: int) -> StoppingCover:
    """Maximal cubes with mass >= M side^(n-1) above the floor generation.

    Parameters
    ----------
    tree : CantorTree
    mass : BoundaryMeasure or sequence of arrays
        Masses for generations 0..floor_gen.
    M : float
        Threshold constant.
    floor_gen : int
        Generation at which cubes still unselected are declared bad.
    """
    floor_gen = int(floor_gen)
    if not 0 <= floor_gen <= tree.m:
        raise InvalidArgument(f"floor generation {floor_gen} outside [0, {tree.m}]")
    levels = generation_masses(mass)
    if len(levels) <= floor_gen:
        raise InvalidArgument("masses missing below the floor generation")
    alive = np.ones(1, dtype=bool)
    good = []
    e = tree.n - 1
    for k in range(floor_gen):
        mu = np.asarray(levels[k], dtype=float)
        hit = alive & (mu >= M * tree.side(k) ** e)
        good.extend((k, int(j)) for j in np.flatnonzero(hit))
        alive = np.repeat(alive & ~hit, tree.branching)
    bad = [(floor_gen, int(j)) for j in np.flatnonzero(alive)]
    return StoppingCover(good=good, bad=bad, M=float(M), floor_gen=floor_gen)
