from __future__ import annotations
import io
import numpy as np
import pytest
from dualcell.errors import MeshParseError, MeshQualityError, MeshTopologyError
from dualcell.layer4_geometry.mesh import (
    DUAL_INTERIOR, PRIMAL_INTERIOR, Triangulation, build_dual_complex, build_micro_cells,
    generate_structured_square, load_triangulation, write_triangulation,
)
from dualcell.layer4_geometry.reference_map import map_point


@pytest.mark.parametrize("n", [1, 2, 5])
def test_structured_square_counts(n):
    tri = generate_structured_square(n, side=2.0)
    assert tri.n_vertices == (n + 1) ** 2
    assert tri.n_triangles == 2 * n * n
    assert tri.n_edges == 3 * n * n + 2 * n
    assert len(tri.boundary_edges) == 4 * n
    assert tri.areas.sum() == pytest.approx(4.0)
    assert np.all(tri.areas > 0)


def test_clockwise_triangles_are_reoriented():
    tri = Triangulation.from_arrays([(0, 0), (1, 0), (0, 1)], [(0, 2, 1)])
    assert tri.areas[0] == pytest.approx(0.5)


def test_input_arrays_are_not_frozen():
    vertices = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])
    tri = Triangulation.from_arrays(vertices, [(0, 1, 2)])
    vertices[0, 0] = 5.0
    assert tri.vertices[0, 0] == 0.0
    assert not tri.vertices.flags.writeable


@pytest.mark.parametrize("vertices, triangles, error", [
    ([(0, 0), (1, 0), (2, 0)], [(0, 1, 2)], MeshQualityError),
    ([(0, 0), (1, 0), (0, 1)], [(0, 1, 3)], MeshTopologyError),
    ([(0, 0), (1, 0), (0, 1)], [(0, 1, 1)], MeshTopologyError),
    ([(0, 0), (1, 0), (0, 1)], [(0, 1, 2), (1, 2, 0)], MeshTopologyError),
    ([(0, 0), (1, 0), (0, 1), (1, 1), (-1, -1)], [(0, 1, 2), (1, 3, 2), (0, 1, 4), (1, 0, 3)], MeshTopologyError),
])
def test_invalid_triangulations(vertices, triangles, error):
    with pytest.raises(error):
        Triangulation.from_arrays(vertices, triangles)


def test_degenerate_triangle_is_named():
    with pytest.raises(MeshQualityError) as info:
        Triangulation.from_arrays([(0, 0), (1, 0), (0, 1), (2, 0)], [(0, 1, 2), (0, 1, 3)])
    assert info.value.triangle == 1


def test_hanging_vertex_is_rejected():
    vertices = [(0, 0), (2, 0), (0, 2), (1, 0), (1, -1)]
    triangles = [(0, 1, 2), (3, 4, 1)]
    with pytest.raises(MeshTopologyError):
        Triangulation.from_arrays(vertices, triangles)


def test_bowtie_vertex_is_non_manifold():
    vertices = [(0, 0), (1, 0), (0, 1), (-1, 0), (0, -1)]
    tri = Triangulation.from_arrays(vertices, [(0, 1, 2), (0, 3, 4)])
    with pytest.raises(MeshTopologyError):
        build_dual_complex(tri)


def test_boundary_markers_from_list():
    tri = Triangulation.from_arrays([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)], boundary=[(1, 0, 7)])
    markers = dict(zip(map(tuple, tri.boundary_edges.tolist()), tri.boundary_markers.tolist()))
    assert markers[(0, 1)] == 7
    assert markers[(0, 2)] == 1
    with pytest.raises(MeshTopologyError):
        Triangulation.from_arrays([(0, 0), (1, 0), (0, 1), (1, 1)], [(0, 1, 2), (1, 3, 2)], boundary=[(1, 2, 3)])


def test_text_format_reload(square4):
    buffer = io.StringIO()
    write_triangulation(square4, buffer)
    buffer.seek(0)
    again = load_triangulation(buffer)
    np.testing.assert_array_equal(again.vertices, square4.vertices)
    np.testing.assert_array_equal(again.triangles, square4.triangles)
    np.testing.assert_array_equal(again.boundary_markers, square4.boundary_markers)


@pytest.mark.parametrize("text, line", [
    ("VERTICES 3\n0 0\n1 x\n0 1\n", 3),
    ("VERTICES 3\n0 0\n1 0\n0 1\nTRIANGLES 1\n0 1 5\nBOUNDARY 0\n", 6),
    ("# header\nVERTICES 1\n0 0\n", 4),
    ("NODES 3\n", 1),
    ("VERTICES 3\n0 0\n1 0\n0 1\nTRIANGLES 1\n0 1 2\nBOUNDARY 0\nextra\n", 8),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(MeshParseError) as info:
        load_triangulation(io.StringIO(text))
    assert info.value.line == line


def test_dual_complex_partitions_the_domain(square4):
    dual = build_dual_complex(square4)
    assert dual.n_cells == square4.n_vertices
    assert dual.cell_areas.sum() == pytest.approx(1.0)
    np.testing.assert_array_equal(dual.is_boundary, square4.is_boundary_vertex)
    # interior vertices of the diagonal grid touch six triangles
    interior = np.flatnonzero(~dual.is_boundary)
    assert all(len(dual.fans[v]) == 6 for v in interior)
    assert len(dual.dual_vertices) == square4.n_triangles + square4.n_edges + len(dual.boundary_vertices)
    assert len(dual.dual_edge(0)) in (2, 3)


def test_micro_cells_follow_the_numbering(jittered):
    mesh = build_micro_cells(jittered)
    tri = jittered
    assert mesh.n_cells == 3 * tri.n_triangles
    np.testing.assert_allclose(mesh.areas, tri.areas[mesh.triangle] / 3.0, rtol=1e-12)
    np.testing.assert_allclose(mesh.corners[:, 0], tri.vertices[mesh.vertex])
    np.testing.assert_allclose(mesh.corners[:, 2], tri.centroids[mesh.triangle])
    # segment 3t+k is {ξ=1} of cell 3t+k and {η=1} of cell 3t+(k+1)%3
    left, right = mesh.segment_cells()
    np.testing.assert_allclose(mesh.corners[left, 1], mesh.corners[right, 3])
    np.testing.assert_allclose(mesh.corners[left, 2], mesh.corners[right, 2])
    # an interior half-edge is {ξ=0} of K_L and {η=0} of K_R with the same end points
    shared = np.flatnonzero((mesh.half_left >= 0) & (mesh.half_right >= 0))
    kl, kr = mesh.half_left[shared], mesh.half_right[shared]
    np.testing.assert_allclose(mesh.corners[kl, 0], mesh.corners[kr, 0])
    np.testing.assert_allclose(mesh.corners[kl, 3], mesh.corners[kr, 1])


def test_edge_tables(square4):
    mesh = build_micro_cells(square4)
    interior = mesh.interior_edges()
    n_interior_edges = int((~square4.is_boundary_edge).sum())
    assert (interior["edge_class"] == DUAL_INTERIOR).sum() == 2 * n_interior_edges
    assert (interior["edge_class"] == PRIMAL_INTERIOR).sum() == 3 * square4.n_triangles
    boundary = mesh.boundary_edges()
    assert len(boundary) == 2 * len(square4.boundary_edges)
    assert set(boundary["marker"]) == {1}
    on_eta0, on_xi0 = mesh.boundary_faces()
    assert int(on_eta0.sum() + on_xi0.sum()) == len(boundary)


def test_locate_point(jittered):
    mesh = build_micro_cells(jittered)
    cell, xi, eta = mesh.locate(0.37, 0.61)
    np.testing.assert_allclose(map_point(mesh.cell(cell), xi, eta), [0.37, 0.61], atol=1e-10)
    with pytest.raises(ValueError):
        mesh.locate(2.0, 2.0)
