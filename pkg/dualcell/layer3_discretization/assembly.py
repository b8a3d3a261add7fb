"""
Assembly — lumped / consistent masses and the discrete coupling operators
─────────────────────────────────────────────────────────────────────────
Masses:
  - lumped:     nodal LGR quadrature; scalar masses are diagonal, vector masses
                split into small SPD blocks whose size does not depend on P
  - consistent: Gauss tensor quadrature (sparsity study only)

Operators (all integrands are metric-free on the reference square):
  - curl_operator      C, rows h, columns e:  h-equation  M_h ḣ = −C e
  - ampere_operator    rows e, columns h:     e-equation  M_e ė = A h  (A = Cᵀ)
  - div_grad_operator  D, rows q, columns v:  q-equation  M_q q̇ = −D v
  - velocity_operator  rows v, columns q:     v-equation  M_v v̇ = G q  (G = Dᵀ)

Boundary modes:
  - electric-wall: boundary faces drop the dual-field trace (E×n̂ = 0, rigid V·n̂ = 0)
  - magnetic-wall: boundary faces drop the primal-field trace (H = 0, pressure-release Q = 0)
"""
from __future__ import annotations
from dataclasses import dataclass
from enum import Enum
from typing import IO, Dict, List, Optional, Sequence, Tuple, Union
import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from dualcell.config import get_settings
from dualcell.errors import AssemblyError, GeometryError, SingularBlockError
from dualcell.layer3_discretization.fe_spaces import (
    DofMap, Grid, SpaceKind, local_nodes, tabulate_reference,
)
from dualcell.layer3_discretization.quadrature_basis import gauss_rule, tensor_rule
from dualcell.layer4_geometry import reference_map as rm
from dualcell.layer4_geometry.mesh import MicroCellMesh, Triangulation
from dualcell.logging_config import get_logger

logger = get_logger(__name__)

SparseOperator = sparse.csr_matrix


class BoundaryMode(str, Enum):
    ELECTRIC_WALL = "electric-wall"
    MAGNETIC_WALL = "magnetic-wall"


class WaveSystem(str, Enum):
    MAXWELL = "maxwell"
    ACOUSTIC = "acoustic"


# ═══════════════════════════════════════════════════════════════════════
# MATERIALS
# ═══════════════════════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class MaterialField:
    """Piecewise-constant coefficients per triangle.

    `primal` weights the mass of the primal scalar field (μ or 1/(ρc²)),
    `dual` weights the mass of the dual vector field (ε or ρ).
    """
    system: WaveSystem
    primal: np.ndarray
    dual: np.ndarray
    raw: Dict[str, np.ndarray]

    @staticmethod
    def _per_triangle(tri: Triangulation, value, name: str) -> np.ndarray:
        arr = np.broadcast_to(np.asarray(value, dtype=float), (tri.n_triangles,)).copy()
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise AssemblyError(f"material coefficient '{name}' must be strictly positive")
        return arr

    @classmethod
    def maxwell(cls, tri: Triangulation, eps=1.0, mu=1.0) -> "MaterialField":
        eps = cls._per_triangle(tri, eps, "eps")
        mu = cls._per_triangle(tri, mu, "mu")
        return cls(WaveSystem.MAXWELL, primal=mu, dual=eps, raw={"eps": eps, "mu": mu})

    @classmethod
    def acoustic(cls, tri: Triangulation, rho=1.0, c=1.0) -> "MaterialField":
        rho = cls._per_triangle(tri, rho, "rho")
        c = cls._per_triangle(tri, c, "c")
        return cls(WaveSystem.ACOUSTIC, primal=1.0 / (rho * c * c), dual=rho, raw={"rho": rho, "c": c})

    def coefficient_for(self, dofmap: DofMap) -> np.ndarray:
        """Per-triangle coefficient weighting the mass of this space."""
        return self.primal if dofmap.spec.grid == Grid.PRIMAL else self.dual


# ═══════════════════════════════════════════════════════════════════════
# BLOCK-DIAGONAL MATRICES
# ═══════════════════════════════════════════════════════════════════════

class BlockDiagonalMatrix:
    """Symmetric matrix stored as independent dense blocks, grouped by block size.

    groups[s] = (idx, blocks) with idx of shape (n_blocks, s) holding the global
    indices of each block and blocks of shape (n_blocks, s, s).
    """

    def __init__(self, n: int, groups: Dict[int, Tuple[np.ndarray, np.ndarray]], tag: str = ""):
        self.n = n
        self.groups = groups
        self.tag = tag

    @classmethod
    def from_diagonal(cls, diag: np.ndarray, tag: str = "") -> "BlockDiagonalMatrix":
        diag = np.asarray(diag, dtype=float)
        idx = np.arange(len(diag))[:, None]
        return cls(len(diag), {1: (idx, diag[:, None, None].copy())}, tag)

    @classmethod
    def from_sparse(cls, A, tag: str = "", rtol: float = 1e-15) -> "BlockDiagonalMatrix":
        """Split a sparse symmetric matrix into the connected components of its pattern."""
        A = sparse.coo_matrix(A)
        n = A.shape[0]
        keep = np.abs(A.data) > rtol * (np.abs(A.data).max() if A.nnz else 0.0)
        rows, cols, vals = A.row[keep], A.col[keep], A.data[keep]
        pattern = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        n_comp, labels = csgraph.connected_components(pattern, directed=False)
        sizes = np.bincount(labels, minlength=n_comp)
        order = np.argsort(labels, kind="stable")
        starts = np.r_[0, np.cumsum(sizes)[:-1]]
        position = np.empty(n, dtype=np.int64)
        position[order] = np.arange(n) - starts[labels[order]]

        groups: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        group_index = np.empty(n_comp, dtype=np.int64)
        for s in np.unique(sizes):
            comps = np.flatnonzero(sizes == s)
            group_index[comps] = np.arange(len(comps))
            idx = order[starts[comps][:, None] + np.arange(s)[None, :]]
            groups[int(s)] = (idx, np.zeros((len(comps), s, s)))
        entry_size = sizes[labels[rows]]
        for s, (_, blocks) in groups.items():
            sel = entry_size == s
            np.add.at(
                blocks,
                (group_index[labels[rows[sel]]], position[rows[sel]], position[cols[sel]]),
                vals[sel],
            )
        return cls(n, groups, tag)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n, self.n

    @property
    def max_block_size(self) -> int:
        return max(self.groups) if self.groups else 0

    def block_sizes(self) -> np.ndarray:
        """Size of the block holding each row."""
        out = np.zeros(self.n, dtype=np.int64)
        for s, (idx, _) in self.groups.items():
            out[idx.ravel()] = s
        return out

    def block_histogram(self) -> Dict[int, int]:
        return {s: len(idx) for s, (idx, _) in sorted(self.groups.items())}

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = np.zeros(self.n)
        for idx, blocks in self.groups.values():
            y[idx] = np.einsum("bij,bj->bi", blocks, x[idx])
        return y

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.matvec(x)

    def to_sparse(self) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for s, (idx, blocks) in self.groups.items():
            rows.append(np.repeat(idx, s, axis=1).ravel())
            cols.append(np.tile(idx, (1, s)).ravel())
            vals.append(blocks.reshape(len(idx), -1).ravel())
        if not rows:
            return sparse.csr_matrix((self.n, self.n))
        M = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=self.shape
        ).tocsr()
        M.eliminate_zeros()
        return M

    def nnz_per_row(self) -> np.ndarray:
        return np.diff(self.to_sparse().indptr)

    def diagonal(self) -> np.ndarray:
        return self.to_sparse().diagonal()

    def check_positive(self) -> None:
        """Raise SingularBlockError unless every block is symmetric positive definite."""
        for s, (idx, blocks) in self.groups.items():
            if s == 1:
                bad = blocks[:, 0, 0] <= 0
            elif s == 2:
                det = blocks[:, 0, 0] * blocks[:, 1, 1] - blocks[:, 0, 1] * blocks[:, 1, 0]
                bad = (blocks[:, 0, 0] <= 0) | (det <= 0)
            else:
                bad = np.linalg.eigvalsh(0.5 * (blocks + np.swapaxes(blocks, 1, 2)))[:, 0] <= 0
            if np.any(bad):
                b = int(np.argmax(bad))
                raise SingularBlockError(f"{self.tag or 'block matrix'}: block at rows {idx[b].tolist()} is not SPD")

    def invert(self) -> "BlockDiagonalMatrix":
        self.check_positive()
        groups = {}
        for s, (idx, blocks) in self.groups.items():
            if s == 1:
                inv = 1.0 / blocks
            elif s == 2:
                a, b, c, d = blocks[:, 0, 0], blocks[:, 0, 1], blocks[:, 1, 0], blocks[:, 1, 1]
                det = a * d - b * c
                inv = np.stack([np.stack([d, -b], axis=-1), np.stack([-c, a], axis=-1)], axis=1) / det[:, None, None]
            else:
                inv = np.linalg.inv(blocks)
            groups[s] = (idx, inv)
        return BlockDiagonalMatrix(self.n, groups, f"inv({self.tag})" if self.tag else "")


def invert_blocks(M: BlockDiagonalMatrix) -> BlockDiagonalMatrix:
    return M.invert()


# ═══════════════════════════════════════════════════════════════════════
# MASSES
# ═══════════════════════════════════════════════════════════════════════

def _metric_at(dofmap: DofMap, dF: np.ndarray, J: np.ndarray) -> np.ndarray:
    G, Hm = rm.metric_tensors(dF, J)
    return G if dofmap.spec.kind == SpaceKind.CURL else Hm


def lumped_mass(dofmap: DofMap, material: MaterialField) -> BlockDiagonalMatrix:
    """Mass matrix with the nodal LGR rule: w_i w_j J (scalar) or w_i w_j G / Hm (vector)."""
    mesh = dofmap.mesh
    coeff = material.coefficient_for(dofmap)[mesh.triangle]
    xi, eta, w2 = tensor_rule(dofmap.family)
    dF = rm.jacobians(mesh.corners, xi, eta)
    J = rm.determinants(dF)
    rm.check_regular(J, mesh.corners)
    scale = coeff[:, None] * w2[None, :]
    tag = f"lumped {dofmap.spec.label}"
    if not dofmap.is_vector:
        diag = np.bincount(dofmap.cell_dofs.ravel(), weights=(scale * J).ravel(), minlength=dofmap.total_dofs)
        M = BlockDiagonalMatrix.from_diagonal(diag, tag)
    else:
        T = _metric_at(dofmap, dF, J)
        n = dofmap.n_scalar
        rows, cols, vals = [], [], []
        for a in range(2):
            for b in range(2):
                ra, cb = slice(a * n, (a + 1) * n), slice(b * n, (b + 1) * n)
                rows.append(dofmap.cell_dofs[:, ra].ravel())
                cols.append(dofmap.cell_dofs[:, cb].ravel())
                vals.append((scale * T[..., a, b] * dofmap.cell_signs[:, ra] * dofmap.cell_signs[:, cb]).ravel())
        A = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dofmap.total_dofs, dofmap.total_dofs),
        ).tocsr()
        M = BlockDiagonalMatrix.from_sparse(A, tag)
    try:
        M.check_positive()
    except SingularBlockError as exc:
        raise GeometryError(str(exc)) from exc
    logger.info(f"Assembly: {tag} → blocks {M.block_histogram()}")
    return M


def _prune(A, rtol: float = 1e-15) -> sparse.csr_matrix:
    """Drop stored entries below rtol × their row's largest magnitude."""
    A = sparse.csr_matrix(A)
    A.sum_duplicates()
    if A.nnz:
        row_of = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
        row_max = np.zeros(A.shape[0])
        np.maximum.at(row_max, row_of, np.abs(A.data))
        A.data[np.abs(A.data) <= rtol * row_max[row_of]] = 0.0
        A.eliminate_zeros()
    return A


def _chunks(n_cells: int, entries_per_cell: int):
    budget = max(1, 2_000_000 // max(entries_per_cell, 1))
    step = max(1, min(get_settings().solver.assembly_chunk, budget))
    for start in range(0, n_cells, step):
        yield slice(start, min(start + step, n_cells))


def consistent_mass(dofmap: DofMap, material: MaterialField, points: Optional[int] = None) -> SparseOperator:
    """Gauss tensor quadrature of the L² mass: (P+2)² points scalar, (P+4)² vector unless `points` is given."""
    mesh = dofmap.mesh
    P = dofmap.degree
    if points is None:
        points = P + (4 if dofmap.is_vector else 2)
    xi, eta, w = tensor_rule(gauss_rule(points))
    phi, _, _ = tabulate_reference(dofmap.basis, xi, eta)
    coeff = material.coefficient_for(dofmap)[mesh.triangle]
    nl = dofmap.n_local
    N = dofmap.total_dofs
    total = sparse.csr_matrix((N, N))
    for chunk in _chunks(mesh.n_cells, nl * nl):
        dF = rm.jacobians(mesh.corners[chunk], xi, eta)
        J = rm.determinants(dF)
        rm.check_regular(J, mesh.corners[chunk])
        if dofmap.is_vector:
            T = _metric_at(dofmap, dF, J)
            local = np.einsum("q,cqij,qa,qb->ciajb", w, T, phi, phi, optimize=True).reshape(-1, nl, nl)
        else:
            local = np.einsum("q,cq,qa,qb->cab", w, J, phi, phi, optimize=True)
        local *= coeff[chunk, None, None]
        signs = dofmap.cell_signs[chunk]
        local *= signs[:, :, None] * signs[:, None, :]
        dofs = dofmap.cell_dofs[chunk]
        rows = np.broadcast_to(dofs[:, :, None], local.shape).ravel()
        cols = np.broadcast_to(dofs[:, None, :], local.shape).ravel()
        total = total + sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(N, N)).tocsr()
    M = _prune(total)
    logger.info(f"Assembly: consistent {dofmap.spec.label} → nnz={M.nnz}")
    return M


# ═══════════════════════════════════════════════════════════════════════
# REFERENCE OPERATOR BLOCKS
# ═══════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class _ReferenceBlocks:
    """Local (primal-scalar × dual-vector) matrices shared by every micro-cell."""
    volume: np.ndarray           # integrated-by-parts volume term
    strong: np.ndarray           # volume term with the derivative on the dual field
    faces: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]  # η=0, ξ=1, η=1, ξ=0


def _face_table(basis, where: str, s: np.ndarray) -> np.ndarray:
    fixed = {"eta0": (s, 0 * s), "xi1": (1 + 0 * s, s), "eta1": (s, 1 + 0 * s), "xi0": (0 * s, s)}[where]
    phi, _, _ = tabulate_reference(basis, *fixed)
    return phi


def _reference_blocks(primal: DofMap, dual: DofMap, points: Optional[int] = None) -> _ReferenceBlocks:
    """Reference blocks of the Maxwell coupling, rows ĥ and columns v̂ = (v̂₁ | v̂₂).

    volume  = ∫ v̂₁ ∂ηĥ − v̂₂ ∂ξĥ
    strong  = ∫ ĥ (∂ξv̂₂ − ∂ηv̂₁)
    faces   = ∫ ĥ v̂·τ̂ along each reference edge, τ̂ counter-clockwise
    """
    line = gauss_rule(dual.degree + 2 if points is None else points)
    xi, eta, w = tensor_rule(line)
    ph, dh_xi, dh_eta = tabulate_reference(primal.basis, xi, eta)
    pe, de_xi, de_eta = tabulate_reference(dual.basis, xi, eta)
    wh = w[:, None] * ph
    volume = np.hstack([(w[:, None] * dh_eta).T @ pe, -(w[:, None] * dh_xi).T @ pe])
    strong = np.hstack([-wh.T @ de_eta, wh.T @ de_xi])

    s, ws = line.nodes, line.weights
    zero = np.zeros((ph.shape[1], pe.shape[1]))
    blocks = []
    for where, comp, sign in (("eta0", 0, 1.0), ("xi1", 1, 1.0), ("eta1", 0, -1.0), ("xi0", 1, -1.0)):
        th = _face_table(primal.basis, where, s)
        te = _face_table(dual.basis, where, s)
        m = sign * (ws[:, None] * th).T @ te
        blocks.append(np.hstack([m, zero]) if comp == 0 else np.hstack([zero, m]))
    return _ReferenceBlocks(volume=volume, strong=strong, faces=tuple(blocks))


def _reference_div_blocks(primal: DofMap, dual: DofMap, points: Optional[int] = None) -> _ReferenceBlocks:
    """Reference blocks of the acoustic coupling, rows q̂ and columns ŵ = (ŵ₁ | ŵ₂).

    volume  = −∫ ŵ·∇̂q̂
    strong  = ∫ q̂ (∂ξŵ₁ + ∂ηŵ₂)
    faces   = ∫ q̂ ŵ·n̂ along each reference edge, n̂ outward
    """
    line = gauss_rule(dual.degree + 2 if points is None else points)
    xi, eta, w = tensor_rule(line)
    pq, dq_xi, dq_eta = tabulate_reference(primal.basis, xi, eta)
    pv, dv_xi, dv_eta = tabulate_reference(dual.basis, xi, eta)
    wq = w[:, None] * pq
    volume = np.hstack([-(w[:, None] * dq_xi).T @ pv, -(w[:, None] * dq_eta).T @ pv])
    strong = np.hstack([wq.T @ dv_xi, wq.T @ dv_eta])

    s, ws = line.nodes, line.weights
    zero = np.zeros((pq.shape[1], pv.shape[1]))
    blocks = []
    for where, comp, sign in (("eta0", 1, -1.0), ("xi1", 0, 1.0), ("eta1", 1, 1.0), ("xi0", 0, -1.0)):
        tq = _face_table(primal.basis, where, s)
        tv = _face_table(dual.basis, where, s)
        m = sign * (ws[:, None] * tq).T @ tv
        blocks.append(np.hstack([m, zero]) if comp == 0 else np.hstack([zero, m]))
    return _ReferenceBlocks(volume=volume, strong=strong, faces=tuple(blocks))


# ═══════════════════════════════════════════════════════════════════════
# GLOBAL OPERATORS
# ═══════════════════════════════════════════════════════════════════════

def _check_pair(primal: DofMap, dual: DofMap, dual_kind: SpaceKind) -> MicroCellMesh:
    if primal.spec.kind != SpaceKind.GRAD or primal.spec.grid != Grid.PRIMAL:
        raise AssemblyError(f"row space must be primal-grad, got {primal.spec.label}")
    if dual.spec.kind != dual_kind or dual.spec.grid != Grid.DUAL:
        raise AssemblyError(f"column space must be dual-{dual_kind.value}, got {dual.spec.label}")
    if primal.mesh is not dual.mesh:
        raise AssemblyError("spaces live on different meshes")
    if primal.degree != dual.degree:
        raise AssemblyError(f"degree mismatch: {primal.degree} vs {dual.degree}")
    return primal.mesh


def _assemble(primal: DofMap, dual: DofMap, base: np.ndarray,
              boundary_terms: Sequence[Tuple[np.ndarray, np.ndarray]]) -> sparse.csr_matrix:
    """Σ_K P_Kᵀ (base − Σ flag_K · face) Q_K, rows primal DoFs and columns dual DoFs."""
    mesh = primal.mesh
    pattern = np.abs(base) > 0
    for _, face in boundary_terms:
        pattern |= np.abs(face) > 0
    a_idx, b_idx = np.nonzero(pattern)
    shape = (primal.total_dofs, dual.total_dofs)
    total = sparse.csr_matrix(shape)
    base_vals = base[a_idx, b_idx]
    face_vals = [(flags, face[a_idx, b_idx]) for flags, face in boundary_terms]
    for chunk in _chunks(mesh.n_cells, len(a_idx)):
        vals = np.broadcast_to(base_vals, (chunk.stop - chunk.start, len(a_idx))).copy()
        for flags, fv in face_vals:
            vals -= flags[chunk, None] * fv[None, :]
        vals *= primal.cell_signs[chunk][:, a_idx] * dual.cell_signs[chunk][:, b_idx]
        rows = primal.cell_dofs[chunk][:, a_idx].ravel()
        cols = dual.cell_dofs[chunk][:, b_idx].ravel()
        total = total + sparse.coo_matrix((vals.ravel(), (rows, cols)), shape=shape).tocsr()
    return _prune(total)


def _boundary_flags(mesh: MicroCellMesh) -> Tuple[np.ndarray, np.ndarray]:
    on_eta0, on_xi0 = mesh.boundary_faces()
    return on_eta0.astype(float), on_xi0.astype(float)


def curl_operator(h_space: DofMap, e_space: DofMap, bc: BoundaryMode,
                  points: Optional[int] = None) -> SparseOperator:
    """Faraday coupling: −∫_T E·rot h + ∮_∂T h E·τ, assembled micro-cell by micro-cell."""
    mesh = _check_pair(h_space, e_space, SpaceKind.CURL)
    ref = _reference_blocks(h_space, e_space, points)
    f_eta0, _, _, f_xi0 = ref.faces
    base = ref.volume + f_eta0 + f_xi0
    terms = []
    if BoundaryMode(bc) == BoundaryMode.ELECTRIC_WALL:
        on_eta0, on_xi0 = _boundary_flags(mesh)
        terms = [(on_eta0, f_eta0), (on_xi0, f_xi0)]
    C = _assemble(h_space, e_space, base, terms)
    logger.info(f"Assembly: curl operator {C.shape} nnz={C.nnz} bc={BoundaryMode(bc).value}")
    return C


def ampere_operator(h_space: DofMap, e_space: DofMap, bc: BoundaryMode,
                    points: Optional[int] = None) -> SparseOperator:
    """Ampère coupling, rows e: ∫ H curl e − ∮_∂T̃ H e·τ, assembled independently of C."""
    mesh = _check_pair(h_space, e_space, SpaceKind.CURL)
    ref = _reference_blocks(h_space, e_space, points)
    f_eta0, f_xi1, f_eta1, f_xi0 = ref.faces
    base = ref.strong - f_xi1 - f_eta1
    terms = []
    if BoundaryMode(bc) != BoundaryMode.MAGNETIC_WALL:
        on_eta0, on_xi0 = _boundary_flags(mesh)
        terms = [(on_eta0, f_eta0), (on_xi0, f_xi0)]
    return _assemble(h_space, e_space, base, terms).T.tocsr()


def div_grad_operator(q_space: DofMap, v_space: DofMap, bc: BoundaryMode,
                      points: Optional[int] = None) -> SparseOperator:
    """Pressure coupling: −∫_T V·∇q + ∮_∂T q V·n̂ (≈ ∫ q div V)."""
    mesh = _check_pair(q_space, v_space, SpaceKind.DIV)
    ref = _reference_div_blocks(q_space, v_space, points)
    f_eta0, _, _, f_xi0 = ref.faces
    base = ref.volume + f_eta0 + f_xi0
    terms = []
    if BoundaryMode(bc) == BoundaryMode.ELECTRIC_WALL:
        on_eta0, on_xi0 = _boundary_flags(mesh)
        terms = [(on_eta0, f_eta0), (on_xi0, f_xi0)]
    D = _assemble(q_space, v_space, base, terms)
    logger.info(f"Assembly: div-grad operator {D.shape} nnz={D.nnz} bc={BoundaryMode(bc).value}")
    return D


def velocity_operator(q_space: DofMap, v_space: DofMap, bc: BoundaryMode,
                      points: Optional[int] = None) -> SparseOperator:
    """Velocity coupling, rows v: ∫ Q div w − ∮_∂T̃ Q w·n̂ (≈ −∫ ∇Q·w)."""
    mesh = _check_pair(q_space, v_space, SpaceKind.DIV)
    ref = _reference_div_blocks(q_space, v_space, points)
    f_eta0, f_xi1, f_eta1, f_xi0 = ref.faces
    base = ref.strong - f_xi1 - f_eta1
    terms = []
    if BoundaryMode(bc) != BoundaryMode.MAGNETIC_WALL:
        on_eta0, on_xi0 = _boundary_flags(mesh)
        terms = [(on_eta0, f_eta0), (on_xi0, f_xi0)]
    return _assemble(q_space, v_space, base, terms).T.tocsr()


def duality_defect(C: SparseOperator, A: SparseOperator) -> float:
    """max |Cᵀ − A| entrywise."""
    diff = (C.T - A).tocoo()
    return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


def write_operator(op, stream: IO[str]) -> None:
    """Matrix-market-like dump: header then 1-based 'row col value' lines, row-major."""
    A = sparse.csr_matrix(op)
    A.sort_indices()
    coo = A.tocoo()
    stream.write(f"%%sparse {A.shape[0]} {A.shape[1]} {A.nnz}\n")
    for r, c, v in zip(coo.row, coo.col, coo.data):
        stream.write(f"{r + 1} {c + 1} {float(v)!r}\n")
