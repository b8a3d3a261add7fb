"""
Discrete Spaces — DoF enumeration on dual cells and primal triangles
────────────────────────────────────────────────────────────────────
Supported spaces (kind × grid):
  - grad × dual:    continuous inside each dual cell (vertex, half-edge, face DoFs)
  - curl × dual:    tangentially continuous inside each dual cell
  - div  × dual:    normally continuous inside each dual cell
  - grad × primal:  continuous inside each triangle (centroid, segment, face DoFs);
                    also carries the scalar rot space of the magnetic field / pressure

Dual spaces use the dual LGR family (first node 0, so the vertex DoF sits on
the primal vertex); the primal space uses the primal family (last node 1, so
the anchor DoF sits on the centroid). The global spaces are broken across the
other grid's edges.

Local slots on a micro-cell: scalar slot = j(P+1)+i, vector slot =
c(P+1)² + j(P+1)+i, with i the ξ-node, j the η-node and c the reference
component. The dual div basis is the curl basis rotated slot-wise,
ŵ = (v̂₂, −v̂₁), which turns tangential continuity into normal continuity.
"""
from __future__ import annotations
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import Callable, Optional, Tuple
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from dualcell.config import get_settings
from dualcell.errors import UnsupportedSpaceError
from dualcell.layer3_discretization.quadrature_basis import (
    LagrangeBasis, NodeFamily, dual_rule, gauss_rule, lgr_rule, tensor_rule,
)
from dualcell.layer4_geometry import reference_map as rm
from dualcell.layer4_geometry.mesh import MicroCellMesh
from dualcell.logging_config import get_logger

logger = get_logger(__name__)


class SpaceKind(str, Enum):
    GRAD = "grad"
    CURL = "curl"
    DIV = "div"


class Grid(str, Enum):
    PRIMAL = "primal"
    DUAL = "dual"


class DofClass(IntEnum):
    VERTEX = 0
    EDGE = 1
    FACE = 2


class SpaceSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: SpaceKind
    grid: Grid
    degree: int = Field(ge=0)

    @property
    def is_vector(self) -> bool:
        return self.kind != SpaceKind.GRAD

    @property
    def label(self) -> str:
        return f"{self.grid.value}-{self.kind.value} P={self.degree}"


def space_family(spec: SpaceSpec) -> NodeFamily:
    primal = lgr_rule(spec.degree)
    return primal if spec.grid == Grid.PRIMAL else dual_rule(primal)


def local_nodes(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """(i, j) node indices of the scalar slots, i running fastest."""
    n = degree + 1
    return np.tile(np.arange(n), n), np.repeat(np.arange(n), n)


def tabulate_reference(basis: LagrangeBasis, xi: np.ndarray, eta: np.ndarray):
    """Tensor basis values and reference derivatives at paired points.

    Returns (phi, d_xi, d_eta), each of shape (n_q, (P+1)²).
    """
    lx, ly = basis.tabulate(xi), basis.tabulate(eta)
    dx, dy = basis.tabulate_deriv(xi), basis.tabulate_deriv(eta)
    i, j = local_nodes(basis.degree)
    return lx[:, i] * ly[:, j], dx[:, i] * ly[:, j], lx[:, i] * dy[:, j]


@dataclass(frozen=True, eq=False)
class DofMap:
    spec: SpaceSpec
    mesh: MicroCellMesh
    family: NodeFamily
    basis: LagrangeBasis
    total_dofs: int
    cell_dofs: np.ndarray        # (nc, n_local) global DoF per local slot
    cell_signs: np.ndarray       # (nc, n_local) ±1
    dof_class: np.ndarray        # (N,) DofClass codes
    dof_macro: np.ndarray        # (N,) owning dual cell or triangle
    dof_owner: np.ndarray        # (N,) one micro-cell holding the DoF
    dof_slot: np.ndarray         # (N,) its local slot there

    @property
    def degree(self) -> int:
        return self.spec.degree

    @property
    def is_vector(self) -> bool:
        return self.spec.is_vector

    @property
    def n_scalar(self) -> int:
        return (self.degree + 1) ** 2

    @property
    def n_local(self) -> int:
        return self.cell_dofs.shape[1]

    def dimension_of_macro(self, index: int) -> int:
        return int(np.count_nonzero(self.dof_macro == index))

    def class_counts(self) -> dict:
        counts = np.bincount(self.dof_class, minlength=3)
        return {cls.name.lower(): int(counts[cls]) for cls in DofClass}

    def local_values(self, values: np.ndarray, cells=None) -> np.ndarray:
        cells = slice(None) if cells is None else cells
        return values[self.cell_dofs[cells]] * self.cell_signs[cells]


@dataclass
class FieldVector:
    dofmap: DofMap
    values: np.ndarray

    @property
    def spec(self) -> SpaceSpec:
        return self.dofmap.spec

    @classmethod
    def zeros(cls, dofmap: DofMap) -> "FieldVector":
        return cls(dofmap, np.zeros(dofmap.total_dofs))


# ═══════════════════════════════════════════════════════════════════════
# ENUMERATION
# ═══════════════════════════════════════════════════════════════════════

def _half_edges_of_fan(mesh: MicroCellMesh, v: int, fan: np.ndarray) -> np.ndarray:
    halves = mesh.eta0[fan]
    if mesh.dual.is_boundary[v]:
        halves = np.r_[halves, mesh.xi0[fan[-1]]]
    return halves


def _dual_grad(mesh: MicroCellMesh, P: int):
    nc = mesh.n_cells
    fans = mesh.dual.fans
    sizes = [1 + len(_half_edges_of_fan(mesh, v, fan)) * P + len(fan) * P * P for v, fan in enumerate(fans)]
    total = int(sum(sizes))
    dof_class = np.empty(total, dtype=np.int8)
    dof_macro = np.empty(total, dtype=np.int64)
    vertex_dof = np.empty(len(fans), dtype=np.int64)
    half_base = np.full(mesh.n_half_edges, -1, dtype=np.int64)
    face_base = np.empty(nc, dtype=np.int64)

    counter = 0
    for v, fan in enumerate(fans):
        dof_macro[counter:counter + sizes[v]] = v
        vertex_dof[v] = counter
        dof_class[counter] = DofClass.VERTEX
        counter += 1
        for he in _half_edges_of_fan(mesh, v, fan):
            half_base[he] = counter
            dof_class[counter:counter + P] = DofClass.EDGE
            counter += P
        for c in fan:
            face_base[c] = counter
            dof_class[counter:counter + P * P] = DofClass.FACE
            counter += P * P

    i, j = local_nodes(P)
    dofs = np.empty((nc, (P + 1) ** 2), dtype=np.int64)
    corner = (i == 0) & (j == 0)
    along_eta0 = (i >= 1) & (j == 0)
    along_xi0 = (i == 0) & (j >= 1)
    face = (i >= 1) & (j >= 1)
    dofs[:, corner] = vertex_dof[mesh.vertex][:, None]
    dofs[:, along_eta0] = half_base[mesh.eta0][:, None] + (i[along_eta0] - 1)[None, :]
    dofs[:, along_xi0] = half_base[mesh.xi0][:, None] + (j[along_xi0] - 1)[None, :]
    dofs[:, face] = face_base[:, None] + ((j[face] - 1) * P + (i[face] - 1))[None, :]
    return total, dofs, np.ones(dofs.shape), dof_class, dof_macro


def _vector_face_rank(P: int) -> np.ndarray:
    """Rank of each face slot within a cell; node by node, component 1 before 2."""
    n = P + 1
    rank = np.full(2 * n * n, -1, dtype=np.int64)
    r = 0
    for j in range(n):
        for i in range(n):
            if j >= 1:
                rank[j * n + i] = r
                r += 1
            if i >= 1:
                rank[n * n + j * n + i] = r
                r += 1
    return rank


def _dual_curl(mesh: MicroCellMesh, P: int):
    nc = mesh.n_cells
    n = P + 1
    fans = mesh.dual.fans
    face_size = 2 * P * n
    sizes = [len(_half_edges_of_fan(mesh, v, fan)) * n + len(fan) * face_size for v, fan in enumerate(fans)]
    total = int(sum(sizes))
    dof_class = np.empty(total, dtype=np.int8)
    dof_macro = np.empty(total, dtype=np.int64)
    half_base = np.full(mesh.n_half_edges, -1, dtype=np.int64)
    face_base = np.empty(nc, dtype=np.int64)

    counter = 0
    for v, fan in enumerate(fans):
        dof_macro[counter:counter + sizes[v]] = v
        for he in _half_edges_of_fan(mesh, v, fan):
            half_base[he] = counter
            dof_class[counter:counter + n] = DofClass.EDGE
            counter += n
        for c in fan:
            face_base[c] = counter
            dof_class[counter:counter + face_size] = DofClass.FACE
            counter += face_size

    i, j = local_nodes(P)
    i2, j2 = np.r_[i, i], np.r_[j, j]
    comp = np.repeat([0, 1], n * n)
    dofs = np.empty((nc, 2 * n * n), dtype=np.int64)
    tangential_eta0 = (comp == 0) & (j2 == 0)
    tangential_xi0 = (comp == 1) & (i2 == 0)
    face = ~(tangential_eta0 | tangential_xi0)
    rank = _vector_face_rank(P)
    dofs[:, tangential_eta0] = half_base[mesh.eta0][:, None] + i2[tangential_eta0][None, :]
    dofs[:, tangential_xi0] = half_base[mesh.xi0][:, None] + j2[tangential_xi0][None, :]
    dofs[:, face] = face_base[:, None] + rank[face][None, :]
    return total, dofs, np.ones(dofs.shape), dof_class, dof_macro


def _dual_div(mesh: MicroCellMesh, P: int):
    total, curl_dofs, _, dof_class, dof_macro = _dual_curl(mesh, P)
    half = (P + 1) ** 2
    # ŵ₁ = v̂₂ and ŵ₂ = −v̂₁ slot by slot
    dofs = np.concatenate([curl_dofs[:, half:], curl_dofs[:, :half]], axis=1)
    signs = np.concatenate([np.ones((mesh.n_cells, half)), -np.ones((mesh.n_cells, half))], axis=1)
    return total, dofs, signs, dof_class, dof_macro


def _primal_grad(mesh: MicroCellMesh, P: int):
    nt = mesh.triangulation.n_triangles
    per_triangle = 1 + 3 * P + 3 * P * P
    total = nt * per_triangle
    start = np.arange(nt) * per_triangle
    seg = np.arange(mesh.n_segments)
    seg_base = start[seg // 3] + 1 + (seg % 3) * P
    face_base = start[mesh.triangle] + 1 + 3 * P + mesh.local * P * P

    local_class = np.r_[[int(DofClass.VERTEX)], np.full(3 * P, int(DofClass.EDGE)), np.full(3 * P * P, int(DofClass.FACE))]
    dof_class = np.tile(local_class, nt).astype(np.int8)
    dof_macro = np.repeat(np.arange(nt), per_triangle)

    i, j = local_nodes(P)
    dofs = np.empty((mesh.n_cells, (P + 1) ** 2), dtype=np.int64)
    anchor = (i == P) & (j == P)
    along_xi1 = (i == P) & (j < P)
    along_eta1 = (i < P) & (j == P)
    face = (i < P) & (j < P)
    dofs[:, anchor] = start[mesh.triangle][:, None]
    dofs[:, along_xi1] = seg_base[mesh.xi1][:, None] + j[along_xi1][None, :]
    dofs[:, along_eta1] = seg_base[mesh.eta1][:, None] + i[along_eta1][None, :]
    dofs[:, face] = face_base[:, None] + (j[face] * P + i[face])[None, :]
    return total, dofs, np.ones(dofs.shape), dof_class, dof_macro


_BUILDERS = {
    (SpaceKind.GRAD, Grid.DUAL): _dual_grad,
    (SpaceKind.CURL, Grid.DUAL): _dual_curl,
    (SpaceKind.DIV, Grid.DUAL): _dual_div,
    (SpaceKind.GRAD, Grid.PRIMAL): _primal_grad,
}


def enumerate_dofs(spec: SpaceSpec, mesh: MicroCellMesh) -> DofMap:
    builder = _BUILDERS.get((spec.kind, spec.grid))
    if builder is None:
        raise UnsupportedSpaceError(f"{spec.label} is reserved and not implemented")
    family = space_family(spec)
    total, dofs, signs, dof_class, dof_macro = builder(mesh, spec.degree)
    flat = dofs.ravel()
    _, first = np.unique(flat, return_index=True)
    dof_owner, dof_slot = np.divmod(first, dofs.shape[1])
    if len(first) != total:
        raise UnsupportedSpaceError(f"{spec.label}: {total - len(first)} DoFs are not referenced by any cell")
    dofmap = DofMap(
        spec=spec,
        mesh=mesh,
        family=family,
        basis=LagrangeBasis(family),
        total_dofs=total,
        cell_dofs=dofs,
        cell_signs=signs,
        dof_class=dof_class,
        dof_macro=dof_macro,
        dof_owner=dof_owner,
        dof_slot=dof_slot,
    )
    logger.info(f"Spaces: {spec.label} → {total} DoFs {dofmap.class_counts()}")
    return dofmap


# ═══════════════════════════════════════════════════════════════════════
# NODES, INTERPOLATION, EVALUATION
# ═══════════════════════════════════════════════════════════════════════

def node_location(dofmap: DofMap, index: int) -> Tuple[np.ndarray, Optional[int]]:
    """Physical node of a DoF and, for vector spaces, its reference component (1 or 2)."""
    if not 0 <= index < dofmap.total_dofs:
        raise IndexError(f"DoF {index} out of range 0..{dofmap.total_dofs - 1}")
    cell, slot = int(dofmap.dof_owner[index]), int(dofmap.dof_slot[index])
    component, scalar_slot = divmod(slot, dofmap.n_scalar)
    i, j = local_nodes(dofmap.degree)
    nodes = dofmap.family.nodes
    point = rm.map_points(dofmap.mesh.corners[cell:cell + 1], nodes[i[scalar_slot]], nodes[j[scalar_slot]])[0, 0]
    return point, (component + 1 if dofmap.is_vector else None)


def _sample(f: Callable, x: np.ndarray, y: np.ndarray, vector: bool) -> np.ndarray:
    """Evaluate f(x, y) and broadcast constants; vector results come back as (..., 2)."""
    out = f(x, y)
    if vector:
        fx, fy = out
        return np.stack([np.broadcast_to(fx, x.shape), np.broadcast_to(fy, x.shape)], axis=-1).astype(float)
    return np.broadcast_to(np.asarray(out, dtype=float), x.shape)


def interpolate(dofmap: DofMap, f: Callable) -> FieldVector:
    """Nodal interpolation; vector spaces take the pullback component at each node.

    `f(x, y)` works on arrays and returns a scalar array, or a pair (fx, fy)
    for the curl/div spaces.
    """
    i, j = local_nodes(dofmap.degree)
    nodes = dofmap.family.nodes
    xi, eta = nodes[i], nodes[j]
    corners = dofmap.mesh.corners
    X = rm.map_points(corners, xi, eta)
    if dofmap.is_vector:
        F = _sample(f, X[..., 0], X[..., 1], vector=True)
        dF = rm.jacobians(corners, xi, eta)
        if dofmap.spec.kind == SpaceKind.CURL:
            ref = rm.pull_curl(dF, F)
        else:
            ref = rm.pull_div(dF, rm.determinants(dF), F)
        local = np.concatenate([ref[..., 0], ref[..., 1]], axis=1)
    else:
        local = _sample(f, X[..., 0], X[..., 1], vector=False)
    acc = np.zeros(dofmap.total_dofs)
    np.add.at(acc, dofmap.cell_dofs, local * dofmap.cell_signs)
    hits = np.bincount(dofmap.cell_dofs.ravel(), minlength=dofmap.total_dofs)
    return FieldVector(dofmap, acc / hits)


def evaluate_cells(v: FieldVector, xi, eta, cells=None) -> np.ndarray:
    """Pushed-forward field at paired reference points on a set of cells.

    Shape (n_cells, n_q) for scalar spaces, (n_cells, n_q, 2) for vector ones.
    """
    dofmap = v.dofmap
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    cells = np.arange(dofmap.mesh.n_cells) if cells is None else np.atleast_1d(cells)
    phi, _, _ = tabulate_reference(dofmap.basis, xi, eta)
    u = dofmap.local_values(v.values, cells)
    if not dofmap.is_vector:
        return u @ phi.T
    n = dofmap.n_scalar
    ref = np.stack([u[:, :n] @ phi.T, u[:, n:] @ phi.T], axis=-1)
    dF = rm.jacobians(dofmap.mesh.corners[cells], xi, eta)
    J = rm.determinants(dF)
    if dofmap.spec.kind == SpaceKind.CURL:
        return rm.push_curl(dF, J, ref)
    return rm.push_div(dF, J, ref)


def evaluate_field(v: FieldVector, cell: int, xi: float, eta: float):
    value = evaluate_cells(v, [xi], [eta], [cell])[0, 0]
    return value if v.dofmap.is_vector else float(value)


def l2_error(v: FieldVector, ref: Callable) -> float:
    """L² distance to a reference field with a (P+3)-point Gauss tensor rule per cell."""
    rule = gauss_rule(v.dofmap.degree + 3)
    xi, eta, w = tensor_rule(rule)
    corners = v.dofmap.mesh.corners
    uh = evaluate_cells(v, xi, eta)
    X = rm.map_points(corners, xi, eta)
    exact = _sample(ref, X[..., 0], X[..., 1], vector=v.dofmap.is_vector)
    J = rm.determinants(rm.jacobians(corners, xi, eta))
    diff2 = (uh - exact) ** 2
    if v.dofmap.is_vector:
        diff2 = diff2.sum(axis=-1)
    return float(np.sqrt(np.sum(diff2 * J * w[None, :])))


# ═══════════════════════════════════════════════════════════════════════
# SNAPSHOTS
# ═══════════════════════════════════════════════════════════════════════

def sample_snapshot(v: FieldVector, density: Optional[int] = None) -> pd.DataFrame:
    """Field values on a uniform density×density grid of cell-interior points per micro-cell."""
    density = density or get_settings().output.snapshot_density
    ticks = (np.arange(density) + 0.5) / density
    xi, eta = np.tile(ticks, density), np.repeat(ticks, density)
    X = rm.map_points(v.dofmap.mesh.corners, xi, eta).reshape(-1, 2)
    values = evaluate_cells(v, xi, eta)
    if v.dofmap.is_vector:
        values = values.reshape(-1, 2)
        return pd.DataFrame({"x": X[:, 0], "y": X[:, 1], "vx": values[:, 0], "vy": values[:, 1]})
    return pd.DataFrame({"x": X[:, 0], "y": X[:, 1], "value": values.ravel()})


def write_snapshot(v: FieldVector, path, density: Optional[int] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sample_snapshot(v, density).to_csv(path, index=False)
    logger.info(f"Spaces: snapshot of {v.spec.label} written to {path}")
    return path
