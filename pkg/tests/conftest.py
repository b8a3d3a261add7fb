from __future__ import annotations
import math
import numpy as np
import pytest
from dualcell.config import reset_settings
from dualcell.layer3_discretization.fe_spaces import Grid, SpaceKind, SpaceSpec, enumerate_dofs
from dualcell.layer4_geometry.mesh import (
    Triangulation, build_micro_cells, generate_fan_square, generate_structured_square,
)


@pytest.fixture(autouse=True)
def _isolated_settings(tmp_path, monkeypatch):
    monkeypatch.setenv("DUALCELL_RESULTS_DIR", str(tmp_path / "results"))
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def two_triangles() -> Triangulation:
    return generate_structured_square(1)


@pytest.fixture
def square4() -> Triangulation:
    return generate_structured_square(4)


@pytest.fixture
def fan() -> Triangulation:
    return generate_fan_square()


@pytest.fixture
def jittered() -> Triangulation:
    """4×4 square with interior vertices moved off the grid."""
    base = generate_structured_square(4)
    rng = np.random.default_rng(7)
    vertices = np.array(base.vertices)
    interior = ~base.is_boundary_vertex
    vertices[interior] += rng.uniform(-0.06, 0.06, size=(int(interior.sum()), 2))
    return Triangulation.from_arrays(vertices, base.triangles)


@pytest.fixture
def pi_square() -> Triangulation:
    return generate_structured_square(4, math.pi)


def _spaces(tri: Triangulation, degree: int, dual_kind: SpaceKind = SpaceKind.CURL):
    mesh = build_micro_cells(tri)
    primal = enumerate_dofs(SpaceSpec(kind=SpaceKind.GRAD, grid=Grid.PRIMAL, degree=degree), mesh)
    dual = enumerate_dofs(SpaceSpec(kind=dual_kind, grid=Grid.DUAL, degree=degree), mesh)
    return primal, dual


@pytest.fixture
def make_spaces():
    """(primal-grad, dual-curl or dual-div) DofMaps on a fresh micro-cell mesh."""
    return _spaces
