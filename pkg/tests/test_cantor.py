import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emlab.cantor import (
    CantorSpec, GaugeFunction, build, content, cover_sum, dilates_disjoint, interval_endpoints_exact,
    similarity_dimension, stopping_cover,
)
from emlab.errors import InsufficientDepth, InvalidArgument


def test_constant_tree_geometry():
    t = build(CantorSpec.constant(2, 0.25, 3))
    assert [t.count(k) for k in range(4)] == [1, 4, 16, 64]
    assert [t.side(k) for k in range(4)] == [0.5, 0.125, 0.03125, 0.0078125]
    assert t.cube(1, 3).center == (0.1875, 0.1875)
    assert t.cube(1, 0).center == (-0.1875, -0.1875)


def test_child_index_bits():
    t = build(CantorSpec.constant(3, 0.25, 2))
    for c in range(8):
        ctr = np.array(t.cube(1, c).center)
        for d in range(3):
            assert (ctr[d] > 0) == bool((c >> d) & 1)
    assert t.children(0, 0) == list(range(8))
    assert t.parent(13) == 1
    assert list(t.descendants(1, 2)) == list(range(16, 24))


def test_similarity_dimensions():
    assert similarity_dimension(CantorSpec.constant(2, 0.25, 1)) == pytest.approx(1.0, abs=1e-15)
    assert similarity_dimension(CantorSpec.constant(2, 1 / 3, 1)) == pytest.approx(math.log(4) / math.log(3), abs=1e-15)
    assert similarity_dimension(CantorSpec.constant(3, 0.25, 1)) == pytest.approx(1.5, abs=1e-15)
    with pytest.raises(InvalidArgument):
        similarity_dimension(CantorSpec(2, 0.2, 0.3, (0.2, 0.3)))


def test_cover_sum_hand_value():
    # four cubes of side 1/8, circumscribed radius sqrt(2)/16, gauge r^1
    t = build(CantorSpec.constant(2, 0.25, 1))
    assert cover_sum(t, GaugeFunction(1.0), 1) == pytest.approx(math.sqrt(2) / 4, rel=1e-15)


def test_content_takes_smallest_admissible_cover():
    t = build(CantorSpec.constant(2, 0.25, 3))
    g = GaugeFunction(1.0)
    # diameters sqrt2*(1/2, 1/8, 1/32, 1/128); radius sums are all sqrt2/4 at d=1
    assert content(t, g, 0.2) == pytest.approx(math.sqrt(2) / 4, rel=1e-14)
    g2 = GaugeFunction(1.5)
    assert content(t, g2, 1.0) == min(cover_sum(t, g2, k) for k in range(4))


def test_content_insufficient_depth():
    t = build(CantorSpec.constant(2, 0.25, 1))
    with pytest.raises(InsufficientDepth):
        content(t, GaugeFunction(1.0), 0.1)
    with pytest.raises(InvalidArgument):
        content(t, GaugeFunction(1.0), 0.0)


@pytest.mark.parametrize("kw", [dict(n=4, alpha=0.2, beta=0.3, ratios=()), dict(n=2, alpha=0.3, beta=0.2, ratios=()),
                                dict(n=2, alpha=0.2, beta=0.5, ratios=()),
                                dict(n=2, alpha=0.2, beta=0.3, ratios=(0.35,))])
def test_spec_validation(kw):
    with pytest.raises(InvalidArgument):
        CantorSpec(**kw)


def test_uniform_ratios_reproducible():
    a = CantorSpec.uniform(2, 0.2, 0.3, 5, seed=7)
    b = CantorSpec.uniform(2, 0.2, 0.3, 5, seed=7)
    assert a == b
    assert all(0.2 <= r <= 0.3 for r in a.ratios)


def test_theta_and_disjoint_dilates():
    s = CantorSpec.constant(2, 0.25, 4)
    assert s.theta == pytest.approx(0.25 / 200)
    assert s.theta_exact() == Fraction(1, 800)
    assert all(dilates_disjoint(s, k) for k in range(5))
    # a = 1/4 leaves gaps of one cube side between siblings: factor 3 touches
    assert dilates_disjoint(s, 3, theta=Fraction(3, 2))
    assert not dilates_disjoint(s, 3, theta=2)


def test_interval_endpoints_exact():
    ivs = interval_endpoints_exact(CantorSpec.constant(2, 0.25, 2), 2)
    # centres -3/16 then -3/16 - 3/64
    assert ivs[0] == (Fraction(-15, 64), Fraction(1, 32))
    assert len(ivs) == 4


def test_locate_roundtrip(rng):
    t = build(CantorSpec.uniform(2, 0.2, 0.3, 3, seed=1))
    j = rng.integers(0, t.count(3), 200)
    X = t.centers[3][j] + rng.uniform(-0.5, 0.5, (200, 2)) * t.side(3)
    assert np.array_equal(t.locate(X), j)
    assert np.all(t.locate(np.zeros((1, 2))) == -1)


def test_locate_dilation(rng):
    t = build(CantorSpec.constant(2, 0.25, 2))
    c = np.array(t.cube(2, 5).center)
    x = c + np.array([0.55, 0.0]) * t.side(2)
    assert t.locate(x)[0] == -1
    assert t.locate(x, dilation=1.2)[0] == 5


def test_write_jsonl(tmp_path):
    t = build(CantorSpec.constant(2, 0.25, 2))
    p = tmp_path / "tree.jsonl"
    t.write_jsonl(p)
    lines = p.read_text().splitlines()
    assert len(lines) == 1 + 4 + 16
    assert json.loads(lines[0]) == {"k": 0, "j": 0, "center": [0.0, 0.0], "side": 0.5}


@settings(max_examples=30, deadline=None)
@given(ratios=st.lists(st.floats(0.1, 0.45), min_size=1, max_size=4), n=st.sampled_from([2, 3]))
def test_children_nested_and_disjoint(ratios, n):
    spec = CantorSpec(n=n, alpha=min(ratios), beta=max(ratios), ratios=tuple(ratios))
    t = build(spec)
    for k in range(1, t.m + 1):
        C, P = t.centers[k], np.repeat(t.centers[k - 1], t.branching, axis=0)
        # each child lies inside its parent
        assert np.all(np.abs(C - P) + t.side(k) / 2 <= t.side(k - 1) / 2 + 1e-15)
    assert all(dilates_disjoint(spec, k) for k in range(t.m + 1))


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.1, 0.45), m=st.integers(1, 5))
def test_diameter_scaling(a, m):
    t = build(CantorSpec.constant(2, a, m))
    for k in range(m):
        assert t.diameter(k + 1) == pytest.approx(a * t.diameter(k), rel=1e-14)


# -- stopping cover --------------------------------------------------------

def _masses(tree, leaf):
    lv = [np.asarray(leaf, dtype=float)]
    for _ in range(tree.m):
        lv.append(lv[-1].reshape(-1, tree.branching).sum(axis=1))
    return lv[::-1]


def test_stopping_cover_extremes():
    t = build(CantorSpec.constant(2, 0.25, 3))
    lv = _masses(t, np.full(64, 1 / 64))
    huge = stopping_cover(t, lv, 1e9, 3)
    assert huge.good == [] and huge.bad == [(3, j) for j in range(64)]
    tiny = stopping_cover(t, lv, 1e-9, 3)
    assert tiny.good == [(0, 0)] and tiny.bad == []


def test_stopping_cover_uniform_hand_case():
    # mu = 4^-k, s^(n-1) = (1/2) 4^-k, so M = 1 selects the root
    t = build(CantorSpec.constant(2, 0.25, 3))
    cov = stopping_cover(t, _masses(t, np.full(64, 1 / 64)), 1.0, 3)
    assert cov.cubes() == [(0, 0)]


def test_stopping_cover_floor_errors():
    t = build(CantorSpec.constant(2, 0.25, 2))
    with pytest.raises(InvalidArgument):
        stopping_cover(t, _masses(t, np.ones(16)), 1.0, 3)


@settings(max_examples=40, deadline=None)
@given(leaf=st.lists(st.floats(0, 1), min_size=64, max_size=64), M=st.floats(0.01, 100), floor=st.integers(0, 3))
def test_stopping_cover_partition_property(leaf, M, floor):
    t = build(CantorSpec.constant(2, 0.25, 3))
    lv = _masses(t, leaf)
    cov = stopping_cover(t, lv, M, floor)
    # leaves under the cover: each generation-3 cube exactly once
    hit = np.zeros(64, dtype=int)
    for k, j in cov.cubes():
        hit[list(t.descendants(k, j))] += 1
    assert np.all(hit == 1)
    for k, j in cov.good:
        assert lv[k][j] >= M * t.side(k) and k < floor
        for a in range(k):
            assert lv[a][j >> (2 * (k - a))] < M * t.side(a)
