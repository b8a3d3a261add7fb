from __future__ import annotations
import numpy as np
import pytest
from pydantic import ValidationError
from dualcell.errors import UnsupportedSpaceError
from dualcell.layer3_discretization.fe_spaces import (
    DofClass, Grid, SpaceKind, SpaceSpec, enumerate_dofs, evaluate_field, interpolate, l2_error, node_location,
    sample_snapshot, write_snapshot,
)
from dualcell.layer4_geometry.mesh import build_micro_cells


def _spec(kind, grid, degree):
    return SpaceSpec(kind=kind, grid=grid, degree=degree)


@pytest.mark.parametrize("degree", [0, 1, 2, 4])
def test_dof_counts(jittered, degree):
    mesh = build_micro_cells(jittered)
    nv, ne, nt, nc = jittered.n_vertices, jittered.n_edges, jittered.n_triangles, mesh.n_cells
    P = degree
    primal = enumerate_dofs(_spec(SpaceKind.GRAD, Grid.PRIMAL, P), mesh)
    dual_grad = enumerate_dofs(_spec(SpaceKind.GRAD, Grid.DUAL, P), mesh)
    curl = enumerate_dofs(_spec(SpaceKind.CURL, Grid.DUAL, P), mesh)
    div = enumerate_dofs(_spec(SpaceKind.DIV, Grid.DUAL, P), mesh)
    assert primal.total_dofs == nt * (1 + 3 * P + 3 * P * P)
    assert dual_grad.total_dofs == nv + 2 * ne * P + nc * P * P
    assert curl.total_dofs == 2 * ne * (P + 1) + nc * 2 * P * (P + 1)
    assert div.total_dofs == curl.total_dofs
    assert dual_grad.class_counts() == {"vertex": nv, "edge": 2 * ne * P, "face": nc * P * P}
    assert primal.cell_dofs.shape == (nc, (P + 1) ** 2)
    assert curl.cell_dofs.shape == (nc, 2 * (P + 1) ** 2)


def test_every_dual_dof_stays_in_one_dual_cell(square4):
    mesh = build_micro_cells(square4)
    dofmap = enumerate_dofs(_spec(SpaceKind.CURL, Grid.DUAL, 2), mesh)
    # cells referencing a DoF all belong to its dual cell
    owners = np.broadcast_to(mesh.vertex[:, None], dofmap.cell_dofs.shape)
    np.testing.assert_array_equal(dofmap.dof_macro[dofmap.cell_dofs], owners)
    assert sum(dofmap.dimension_of_macro(v) for v in range(square4.n_vertices)) == dofmap.total_dofs


@pytest.mark.parametrize("kind", [SpaceKind.CURL, SpaceKind.DIV])
def test_primal_vector_spaces_are_reserved(two_triangles, kind):
    mesh = build_micro_cells(two_triangles)
    with pytest.raises(UnsupportedSpaceError):
        enumerate_dofs(_spec(kind, Grid.PRIMAL, 1), mesh)


def test_negative_degree_is_rejected():
    with pytest.raises(ValidationError):
        _spec(SpaceKind.GRAD, Grid.DUAL, -1)


@pytest.mark.parametrize("grid", [Grid.PRIMAL, Grid.DUAL])
@pytest.mark.parametrize("degree", [1, 3])
def test_scalar_interpolation_reproduces_affine_fields(jittered, grid, degree):
    mesh = build_micro_cells(jittered)
    dofmap = enumerate_dofs(_spec(SpaceKind.GRAD, grid, degree), mesh)
    affine = lambda x, y: 1.5 - 2.0 * x + 0.75 * y
    v = interpolate(dofmap, affine)
    assert l2_error(v, affine) < 1e-12


@pytest.mark.parametrize("kind", [SpaceKind.CURL, SpaceKind.DIV])
@pytest.mark.parametrize("degree", [1, 2])
def test_vector_interpolation_reproduces_constants(jittered, kind, degree):
    mesh = build_micro_cells(jittered)
    dofmap = enumerate_dofs(_spec(kind, Grid.DUAL, degree), mesh)
    constant = lambda x, y: (0.4, -1.1)
    v = interpolate(dofmap, constant)
    assert l2_error(v, constant) < 1e-12
    np.testing.assert_allclose(evaluate_field(v, 5, 0.3, 0.6), [0.4, -1.1], atol=1e-12)


def test_interpolation_error_decreases_with_degree(square4):
    mesh = build_micro_cells(square4)
    f = lambda x, y: np.sin(np.pi * x) * np.cos(np.pi * y)
    errors = [l2_error(interpolate(enumerate_dofs(_spec(SpaceKind.GRAD, Grid.PRIMAL, P), mesh), f), f) for P in (1, 2, 3)]
    assert errors[0] > errors[1] > errors[2]


def test_node_locations(two_triangles):
    mesh = build_micro_cells(two_triangles)
    primal = enumerate_dofs(_spec(SpaceKind.GRAD, Grid.PRIMAL, 1), mesh)
    # the first DoF of each triangle is its centroid
    point, component = node_location(primal, 0)
    np.testing.assert_allclose(point, two_triangles.centroids[0])
    assert component is None
    assert primal.dof_class[0] == DofClass.VERTEX

    dual = enumerate_dofs(_spec(SpaceKind.GRAD, Grid.DUAL, 1), mesh)
    point, _ = node_location(dual, 0)
    np.testing.assert_allclose(point, two_triangles.vertices[0])

    curl = enumerate_dofs(_spec(SpaceKind.CURL, Grid.DUAL, 1), mesh)
    _, component = node_location(curl, 0)
    assert component in (1, 2)
    with pytest.raises(IndexError):
        node_location(curl, curl.total_dofs)


def test_scalar_evaluation_at_a_node(two_triangles):
    mesh = build_micro_cells(two_triangles)
    dofmap = enumerate_dofs(_spec(SpaceKind.GRAD, Grid.DUAL, 2), mesh)
    v = interpolate(dofmap, lambda x, y: x * y)
    value = evaluate_field(v, 0, 0.0, 0.0)
    x, y = two_triangles.vertices[mesh.vertex[0]]
    assert isinstance(value, float)
    assert value == pytest.approx(x * y, abs=1e-14)


def test_snapshots(two_triangles, tmp_path):
    mesh = build_micro_cells(two_triangles)
    scalar = interpolate(enumerate_dofs(_spec(SpaceKind.GRAD, Grid.PRIMAL, 1), mesh), lambda x, y: x)
    frame = sample_snapshot(scalar, density=3)
    assert list(frame.columns) == ["x", "y", "value"]
    assert len(frame) == mesh.n_cells * 9
    np.testing.assert_allclose(frame["value"], frame["x"], atol=1e-13)

    vector = interpolate(enumerate_dofs(_spec(SpaceKind.DIV, Grid.DUAL, 1), mesh), lambda x, y: (1.0, 0.0))
    path = write_snapshot(vector, tmp_path / "snap" / "u.csv", density=2)
    assert path.exists()
    assert path.read_text().splitlines()[0] == "x,y,vx,vy"
