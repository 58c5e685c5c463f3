import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emlab.cantor import CantorSpec, build
from emlab.errors import InvalidArgument, ResourceError
from emlab.mesh import INNER, INTERIOR, OUTER, Mesh, RefinementPolicy, annulus_mesh, axis_breakpoints, generate


def removed_volume(tree):
    return tree.count(tree.m) * tree.side(tree.m) ** tree.n


def assert_valid(mesh, tree=None):
    vol = mesh.signed_volumes()
    assert np.all(vol > 0)
    _, tag, owner = mesh.boundary_facets()
    # every facet on one cell lies on a tagged boundary: the mesh is conforming
    assert np.all(tag >= 0)
    if tree is not None:
        assert math.fsum(vol) == pytest.approx(1.0 - removed_volume(tree), rel=1e-12)
        inner = mesh.tags == INNER
        j = tree.locate(mesh.vertices[inner], tree.m, dilation=1.0 + 1e-9)
        assert np.array_equal(j, mesh.owner[inner])


def test_m0_uniform_square_hole():
    t = build(CantorSpec.constant(2, 0.25, 0))
    mesh = generate(t, RefinementPolicy(uniform_h=1 / 16))
    assert_valid(mesh, t)
    assert mesh.euler_characteristic() == 0
    assert mesh.h_max == pytest.approx(1 / 16)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_2d_topology_and_volume(m):
    t = build(CantorSpec.constant(2, 0.25, m))
    mesh = generate(t, RefinementPolicy(q_min=2))
    assert_valid(mesh, t)
    assert mesh.euler_characteristic() == 1 - 4 ** m


def test_inner_facets_per_cube():
    t = build(CantorSpec.constant(2, 0.25, 2))
    q = 4
    mesh = generate(t, RefinementPolicy(q_min=q))
    _, tag, owner = mesh.boundary_facets()
    counts = np.bincount(owner[tag == INNER], minlength=16)
    assert np.all(counts == 4 * q)


def test_q_rounds_to_power_of_two():
    assert RefinementPolicy(q_min=3).q == 4
    assert RefinementPolicy(q_min=4).q == 4


def test_grading_reduces_vertex_count():
    t = build(CantorSpec.constant(2, 0.25, 3))
    graded = generate(t, RefinementPolicy(q_min=4))
    uniform = generate(t, RefinementPolicy(uniform_h=t.side(3) / 4))
    assert graded.num_vertices < uniform.num_vertices / 3
    assert graded.summary()["max_aspect"] < 2.0


def test_3d_uniform():
    t = build(CantorSpec.constant(3, 0.25, 1))
    mesh = generate(t, RefinementPolicy(uniform_h=1 / 16))
    assert_valid(mesh, t)
    # solid with 8 cavities
    assert mesh.euler_characteristic() == 9


def test_nonreference_ratios():
    t = build(CantorSpec(2, 0.2, 0.3, (0.2, 0.3)))
    mesh = generate(t, RefinementPolicy(q_min=2))
    assert_valid(mesh, t)
    assert mesh.aspect_ratios().max() < 6.0
    rp, tp = axis_breakpoints(t.spec)
    assert np.all(np.diff(rp) >= 0) and np.all(np.diff(tp) >= 0)


def test_vertex_cap():
    t = build(CantorSpec.constant(2, 0.25, 4))
    with pytest.raises(ResourceError) as exc:
        generate(t, RefinementPolicy(q_min=4, vertex_cap=1000))
    assert exc.value.attempted > 1000


@pytest.mark.parametrize("kw", [dict(q_min=0), dict(grade=0), dict(h_max=2.0), dict(vertex_cap=1),
                                dict(uniform_h=0.3)])
def test_policy_validation(kw):
    with pytest.raises(InvalidArgument):
        RefinementPolicy(**kw)


def test_uniform_h_too_coarse():
    t = build(CantorSpec.constant(2, 0.25, 2))
    with pytest.raises(InvalidArgument):
        generate(t, RefinementPolicy(uniform_h=1 / 8))


def test_write_read_roundtrip(tmp_path):
    t = build(CantorSpec.constant(2, 0.25, 1))
    mesh = generate(t, RefinementPolicy(q_min=2))
    p = tmp_path / "m.txt"
    mesh.write(p)
    back = Mesh.read(p)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.cells, mesh.cells)
    assert np.array_equal(back.tags, mesh.tags)
    assert np.array_equal(back.owner, mesh.owner)


def test_read_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("hello\n")
    with pytest.raises(InvalidArgument):
        Mesh.read(p)


def test_mesh_arrays_read_only():
    mesh = annulus_mesh(0.25, 1.0, 1 / 16)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 1.0


@pytest.mark.parametrize("radii", ["geometric", "uniform"])
def test_annulus_mesh(radii):
    mesh = annulus_mesh(0.25, 1.0, 1 / 32, radii=radii)
    assert_valid(mesh)
    assert mesh.euler_characteristic() == 0
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.allclose(r[mesh.tags == INNER], 0.25)
    assert np.allclose(r[mesh.tags == OUTER], 1.0)
    assert np.all((r[mesh.tags == INTERIOR] > 0.25) & (r[mesh.tags == INTERIOR] < 1.0))
    V, C = mesh.vertices, mesh.cells
    legs = [np.linalg.norm(V[C[:, i]] - V[C[:, (i + 1) % 3]], axis=1) for i in range(3)]
    shortest_two = np.sort(np.stack(legs), axis=0)[:2]
    assert shortest_two.max() <= 1 / 32 + 1e-12
    with pytest.raises(InvalidArgument):
        annulus_mesh(0.25, 1.0, 0.5)
    with pytest.raises(InvalidArgument):
        annulus_mesh(0.25, 1.0, 1 / 32, radii="log")


@settings(max_examples=12, deadline=None)
@given(ratios=st.lists(st.floats(0.15, 0.4), min_size=1, max_size=2), q=st.sampled_from([1, 2]))
def test_random_ratio_meshes_conform(ratios, q):
    t = build(CantorSpec(n=2, alpha=min(ratios), beta=max(ratios), ratios=tuple(ratios)))
    mesh = generate(t, RefinementPolicy(q_min=q))
    assert_valid(mesh, t)
    assert mesh.euler_characteristic() == 1 - 4 ** t.m
