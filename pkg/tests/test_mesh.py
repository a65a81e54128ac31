import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erflow.fem_core.space import FeSpace
from erflow.mesh import (DIRICHLET, TRACTION, MeshError, TagKind, build_rectangle_mesh, check_mesh, electrode,
                         ground, load_mesh, rectangle_tagging, refine_uniform, save_mesh)


def test_smallest_mesh():
    m = build_rectangle_mesh(1, 1, 1, 1)
    assert len(m.triangles) >= 2
    assert len(m.boundary_edges) == 4
    assert all(t == DIRICHLET for _, t in m.boundary_edges)


def test_side_tags_partition():
    m = build_rectangle_mesh(1, 1, 2, 2, tagging=rectangle_tagging(left=TRACTION, right=TRACTION))
    kinds = [t.kind for _, t in m.boundary_edges]
    assert kinds.count(TagKind.TRACTION) == 4
    assert kinds.count(TagKind.DIRICHLET) == 4


def test_area_of_rectangle():
    m = build_rectangle_mesh(2, 1, 4, 2)
    assert abs(m.total_area() - 2.0) < 1e-12
    assert np.all(m.signed_areas > 0)


def test_diagonal_split_counts():
    m = build_rectangle_mesh(1, 1, 1, 1, crossed=False)
    assert len(m.triangles) == 2
    assert len(refine_uniform(m).triangles) == 8
    assert abs(refine_uniform(m).total_area() - 1.0) < 1e-12


def test_refinement_doubles_dirichlet_edges():
    tags = rectangle_tagging(left=TRACTION)
    m = build_rectangle_mesh(1, 2, 3, 2, tagging=tags)
    r = refine_uniform(m)
    for kind in (TagKind.DIRICHLET, TagKind.TRACTION):
        assert len(r.edges_with(kind)) == 2 * len(m.edges_with(kind))


def test_parent_p1_representable_on_grandchild():
    m = build_rectangle_mesh(1, 1, 2, 2)
    g = refine_uniform(refine_uniform(m))
    parent = FeSpace(m, 1, 1, constrained=())
    child = FeSpace(g, 1, 1, constrained=())
    rng = np.random.default_rng(3)
    coarse = rng.standard_normal(parent.ndof)
    fine = parent.eval_points(coarse, g.nodes)[0][:, 0]
    # the interpolant on the grandchild reproduces the coarse field everywhere
    pts = rng.random((200, 2))
    assert np.max(np.abs(child.eval_points(fine, pts)[0] - parent.eval_points(coarse, pts)[0])) < 1e-12


def test_round_trip():
    tags = rectangle_tagging(bottom=(DIRICHLET, ground(1)), top=(DIRICHLET, electrode(1)), right=TRACTION)
    m = build_rectangle_mesh(1, 1, 1, 1, tagging=tags)
    m2 = load_mesh(save_mesh(m))
    assert np.array_equal(m.nodes, m2.nodes)
    assert np.array_equal(m.triangles, m2.triangles)
    assert m.boundary_edges == m2.boundary_edges


def test_bad_triangle_index_names_line():
    text = "nodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 7\nboundary_edges 0\n"
    with pytest.raises(MeshError, match="line 6"):
        load_mesh(text)


def test_conflicting_flow_tags_rejected():
    text = ("nodes 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\nboundary_edges 4\n"
            "0 1 DIRICHLET\n0 1 TRACTION\n1 2 DIRICHLET\n2 0 DIRICHLET\n")
    with pytest.raises(MeshError, match="invariant"):
        load_mesh(text)


def test_check_mesh_summary():
    info = check_mesh(build_rectangle_mesh(2, 1, 2, 1))
    assert info["triangles"] == 8
    assert abs(info["boundary_length"] - 6.0) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.integers(1, 5), st.integers(1, 5), st.booleans())
def test_area_and_orientation_property(w, h, nx, ny, crossed):
    m = build_rectangle_mesh(w, h, nx, ny, crossed=crossed)
    assert np.all(m.signed_areas > 0)
    assert abs(m.total_area() - w * h) < 1e-12 * max(1.0, w * h)
    assert abs(m.boundary_length() - 2 * (w + h)) < 1e-12 * (w + h)
    r = refine_uniform(m)
    assert abs(r.total_area() - m.total_area()) < 1e-12 * max(1.0, w * h)
