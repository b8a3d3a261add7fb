"""
Meshes — primal triangulation, barycentric dual complex, micro-cells
─────────────────────────────────────────────────────────────────────
Three nested meshes built from one input triangulation:
  - Triangulation:  vertices, counter-clockwise triangles, boundary markers
  - DualComplex:    one cell per primal vertex, fanned from micro-cells
  - MicroCellMesh:  3 quadrilaterals per triangle, K = (triangle ∩ dual cell)

Numbering conventions (everything downstream relies on them):
  - triangle t = (a, b, c); local edge k joins T[k] and T[k+1]
  - micro-cell 3t+k sits at vertex T[k] with corners
      v¹ = T[k], v² = mid(edge k), v³ = centroid(t), v⁴ = mid(edge k−1)
  - half-edge 2e+s is the half of primal edge e attached to its s-th vertex
  - local micro-edges: 0 = {η=0}, 1 = {ξ=1}, 2 = {η=1}, 3 = {ξ=0}
  - a half-edge is {η=0} of its right cell K_R and {ξ=0} of its left cell K_L
  - primal-interior segment 3t+k joins mid(edge k) to the centroid; it is
    {ξ=1} of cell 3t+k (left) and {η=1} of cell 3t+(k+1)%3 (right)

Text format (whitespace separated, '#' comments):
    VERTICES n / n lines "x y"
    TRIANGLES m / m lines "i j k"
    BOUNDARY b / b lines "i j marker"
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import IO, Dict, List, Optional, Tuple
import numpy as np
import pandas as pd
from dualcell.errors import GeometryError, MeshParseError, MeshQualityError, MeshTopologyError
from dualcell.layer4_geometry import reference_map as rm
from dualcell.logging_config import get_logger

logger = get_logger(__name__)

ETA0, XI1, ETA1, XI0 = 0, 1, 2, 3
DUAL_INTERIOR, PRIMAL_INTERIOR = "dual-interior", "primal-interior"
DEFAULT_MARKER = 1


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _quad_areas(corners: np.ndarray) -> np.ndarray:
    x, y = corners[..., 0], corners[..., 1]
    return 0.5 * np.sum(x * np.roll(y, -1, axis=-1) - np.roll(x, -1, axis=-1) * y, axis=-1)


# ═══════════════════════════════════════════════════════════════════════
# PRIMAL TRIANGULATION
# ═══════════════════════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class Triangulation:
    """Validated conforming triangulation; build it with `from_arrays`."""
    vertices: np.ndarray            # (nv, 2)
    triangles: np.ndarray           # (nt, 3), counter-clockwise
    boundary_edges: np.ndarray      # (nb, 2) vertex pairs
    boundary_markers: np.ndarray    # (nb,)
    edges: np.ndarray               # (ne, 2), sorted vertex pairs
    triangle_edges: np.ndarray      # (nt, 3), local edge k = (T[k], T[k+1])
    edge_triangles: np.ndarray      # (ne, 2), -1 where missing
    edge_markers: np.ndarray        # (ne,), 0 on interior edges

    @classmethod
    def from_arrays(cls, vertices, triangles, boundary=None) -> "Triangulation":
        """Validate, orient counter-clockwise and derive the edge tables.

        `boundary` is an optional list of (i, j, marker); boundary edges it
        does not mention get the default marker.
        """
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        nv, nt = len(vertices), len(triangles)
        if nt == 0:
            raise MeshTopologyError("triangulation has no triangles")
        if triangles.min() < 0 or triangles.max() >= nv:
            raise MeshTopologyError("triangle references a vertex index out of range")
        if np.any(triangles[:, 0] == triangles[:, 1]) or np.any(triangles[:, 1] == triangles[:, 2]) \
                or np.any(triangles[:, 0] == triangles[:, 2]):
            raise MeshTopologyError("triangle with repeated vertex")

        areas = _signed_areas(vertices, triangles)
        scale = np.ptp(vertices, axis=0).max() if nv > 1 else 1.0
        flat = np.abs(areas) <= 1e-14 * scale * scale
        if np.any(flat):
            t = int(np.argmax(flat))
            raise MeshQualityError("degenerate (zero-area) triangle", t)
        clockwise = areas < 0
        if np.any(clockwise):
            logger.info(f"Mesh: reoriented {int(clockwise.sum())} clockwise triangle(s)")
            triangles[clockwise] = triangles[clockwise][:, [0, 2, 1]]

        if len(np.unique(np.sort(triangles, axis=1), axis=0)) != nt:
            raise MeshTopologyError("duplicate triangle")

        directed = np.stack([triangles, np.roll(triangles, -1, axis=1)], axis=2).reshape(-1, 2)
        if len(np.unique(directed, axis=0)) != len(directed):
            raise MeshTopologyError("overlapping triangles share a directed edge")
        edges, inverse, counts = np.unique(
            np.sort(directed, axis=1), axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            e = int(np.argmax(counts > 2))
            raise MeshTopologyError(f"edge {tuple(edges[e])} is shared by {counts[e]} triangles")
        triangle_edges = inverse.reshape(nt, 3)

        ne = len(edges)
        tri_of = np.repeat(np.arange(nt), 3)
        order = np.argsort(inverse, kind="stable")
        sorted_edges = inverse[order]
        first = np.r_[True, sorted_edges[1:] != sorted_edges[:-1]]
        edge_triangles = np.full((ne, 2), -1, dtype=np.int64)
        edge_triangles[sorted_edges[first], 0] = tri_of[order][first]
        edge_triangles[sorted_edges[~first], 1] = tri_of[order][~first]

        on_boundary = counts == 1
        edge_markers = np.zeros(ne, dtype=np.int64)
        edge_markers[on_boundary] = DEFAULT_MARKER
        lookup = {tuple(edges[e]): e for e in np.flatnonzero(on_boundary)}
        for i, j, marker in (boundary or []):
            key = (min(int(i), int(j)), max(int(i), int(j)))
            if key not in lookup:
                raise MeshTopologyError(f"listed boundary edge {key} is not on the mesh boundary")
            edge_markers[lookup[key]] = int(marker)

        boundary_ids = np.flatnonzero(on_boundary)
        _check_hanging_vertices(vertices, edges[boundary_ids])

        tri = cls(
            vertices=vertices,
            triangles=triangles,
            boundary_edges=edges[boundary_ids],
            boundary_markers=edge_markers[boundary_ids],
            edges=edges,
            triangle_edges=triangle_edges,
            edge_triangles=edge_triangles,
            edge_markers=edge_markers,
        )
        for arr in (vertices, triangles, edges, triangle_edges, edge_triangles, edge_markers):
            arr.setflags(write=False)
        return tri

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.vertices[self.edges].mean(axis=1)

    @property
    def is_boundary_edge(self) -> np.ndarray:
        return self.edge_triangles[:, 1] < 0

    @property
    def is_boundary_vertex(self) -> np.ndarray:
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.boundary_edges.ravel()] = True
        return flags

    @property
    def mesh_size(self) -> float:
        """Longest edge length."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.max(np.hypot(d[:, 0], d[:, 1])))

    def summary(self) -> Dict[str, float]:
        return {
            "vertices": self.n_vertices,
            "triangles": self.n_triangles,
            "edges": self.n_edges,
            "boundary_edges": len(self.boundary_edges),
            "area": float(self.areas.sum()),
            "h": self.mesh_size,
        }


def _check_hanging_vertices(vertices: np.ndarray, boundary_edges: np.ndarray) -> None:
    """A vertex strictly inside a boundary segment means the mesh is not conforming."""
    for a, b in boundary_edges:
        pa, pb = vertices[a], vertices[b]
        d = pb - pa
        length2 = float(d @ d)
        rel = vertices - pa
        cross = d[0] * rel[:, 1] - d[1] * rel[:, 0]
        t = (rel @ d) / length2
        inside = (np.abs(cross) <= 1e-12 * length2) & (t > 1e-12) & (t < 1 - 1e-12)
        inside[[a, b]] = False
        if np.any(inside):
            v = int(np.argmax(inside))
            raise MeshTopologyError(f"hanging vertex {v} on edge ({a}, {b})")


# ═══════════════════════════════════════════════════════════════════════
# GENERATORS & TEXT I/O
# ═══════════════════════════════════════════════════════════════════════

def generate_structured_square(n: int, side: float = 1.0) -> Triangulation:
    """Uniform n×n grid on [0, side]², each square split along its rising diagonal."""
    if n < 1:
        raise ValueError(f"need at least one subdivision, got n={n}")
    if side <= 0:
        raise ValueError(f"side length must be positive, got {side}")
    coords = np.linspace(0.0, side, n + 1)
    xx, yy = np.meshgrid(coords, coords)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    tri = Triangulation.from_arrays(vertices, triangles)
    logger.info(f"Mesh: structured square n={n} side={side:g} → {tri.n_triangles} triangles")
    return tri


def generate_fan_square(side: float = 1.0) -> Triangulation:
    """Six triangles fanned around the centre of [0, side]²."""
    if side <= 0:
        raise ValueError(f"side length must be positive, got {side}")
    s = float(side)
    vertices = [(0, 0), (s / 2, 0), (s, 0), (s, s), (s / 2, s), (0, s), (s / 2, s / 2)]
    ring = [0, 1, 2, 3, 4, 5]
    triangles = [(ring[k], ring[(k + 1) % 6], 6) for k in range(6)]
    return Triangulation.from_arrays(vertices, triangles)


class _LineReader:
    """Content lines of a mesh file with their 1-based line numbers."""

    def __init__(self, stream: IO[str]):
        self._entries = []
        self._last = 0
        for number, raw in enumerate(stream, 1):
            self._last = number
            text = raw.split("#", 1)[0].strip()
            if text:
                self._entries.append((number, text.split()))
        self._cursor = 0

    def next(self, what: str) -> Tuple[int, List[str]]:
        if self._cursor >= len(self._entries):
            raise MeshParseError(f"unexpected end of file, expected {what}", self._last + 1)
        entry = self._entries[self._cursor]
        self._cursor += 1
        return entry

    def leftover(self) -> Optional[int]:
        if self._cursor < len(self._entries):
            return self._entries[self._cursor][0]
        return None

    def header(self, expected: str) -> int:
        number, tokens = self.next(f"'{expected}' section")
        if len(tokens) != 2 or tokens[0].upper() != expected:
            raise MeshParseError(f"expected '{expected} <count>'", number)
        try:
            count = int(tokens[1])
        except ValueError:
            raise MeshParseError(f"count of '{expected}' is not an integer", number) from None
        if count < 0:
            raise MeshParseError(f"negative count for '{expected}'", number)
        return count

    def rows(self, count: int, kinds) -> Tuple[List[list], List[int]]:
        out, numbers = [], []
        for _ in range(count):
            number, tokens = self.next(f"{len(kinds)} values")
            if len(tokens) != len(kinds):
                raise MeshParseError(f"expected {len(kinds)} values, got {len(tokens)}", number)
            try:
                out.append([kind(tok) for kind, tok in zip(kinds, tokens)])
            except ValueError:
                raise MeshParseError(f"malformed values {tokens}", number) from None
            numbers.append(number)
        return out, numbers


def load_triangulation(stream: IO[str]) -> Triangulation:
    reader = _LineReader(stream)
    vertices, _ = reader.rows(reader.header("VERTICES"), (float, float))
    triangles, tri_lines = reader.rows(reader.header("TRIANGLES"), (int, int, int))
    boundary, bnd_lines = reader.rows(reader.header("BOUNDARY"), (int, int, int))
    trailing = reader.leftover()
    if trailing is not None:
        raise MeshParseError("trailing content after BOUNDARY section", trailing)
    nv = len(vertices)
    for row, number in zip(triangles + [b[:2] for b in boundary], tri_lines + bnd_lines):
        if min(row) < 0 or max(row) >= nv:
            raise MeshParseError(f"vertex index out of range 0..{nv - 1}", number)
    return Triangulation.from_arrays(vertices, triangles, boundary)


def write_triangulation(tri: Triangulation, stream: IO[str]) -> None:
    stream.write(f"# {tri.n_vertices} vertices, {tri.n_triangles} triangles\n")
    stream.write(f"VERTICES {tri.n_vertices}\n")
    for x, y in tri.vertices:
        stream.write(f"{float(x)!r} {float(y)!r}\n")
    stream.write(f"TRIANGLES {tri.n_triangles}\n")
    for a, b, c in tri.triangles:
        stream.write(f"{a} {b} {c}\n")
    stream.write(f"BOUNDARY {len(tri.boundary_edges)}\n")
    for (a, b), marker in zip(tri.boundary_edges, tri.boundary_markers):
        stream.write(f"{a} {b} {marker}\n")


# ═══════════════════════════════════════════════════════════════════════
# DUAL COMPLEX & MICRO-CELLS
# ═══════════════════════════════════════════════════════════════════════

def _half_edge(edges: np.ndarray, e: np.ndarray, v: np.ndarray) -> np.ndarray:
    return 2 * e + (edges[e, 0] != v).astype(np.int64)


def _micro_topology(tri: Triangulation):
    """Corners, anchor vertices and the {η=0}/{ξ=0} half-edges of every micro-cell."""
    nt = tri.n_triangles
    k = np.tile(np.arange(3), nt)
    t = np.repeat(np.arange(nt), 3)
    anchor = tri.triangles[t, k]
    e_next = tri.triangle_edges[t, k]
    e_prev = tri.triangle_edges[t, (k + 2) % 3]
    corners = np.stack(
        [tri.vertices[anchor], tri.midpoints[e_next], tri.centroids[t], tri.midpoints[e_prev]], axis=1
    )
    eta0 = _half_edge(tri.edges, e_next, anchor)
    xi0 = _half_edge(tri.edges, e_prev, anchor)
    return t, k, anchor, corners, eta0, xi0


@dataclass(frozen=True, eq=False)
class DualComplex:
    """Barycentric dual: cell V is the fan of micro-cells around primal vertex V."""
    centroids: np.ndarray               # (nt, 2)
    midpoints: np.ndarray               # (ne, 2)
    boundary_vertices: np.ndarray       # primal vertex ids on ∂Ω
    fans: List[np.ndarray]              # per primal vertex, micro-cell ids counter-clockwise
    is_boundary: np.ndarray             # (nv,) bool
    cell_areas: np.ndarray              # (nv,)
    edge_triangles: np.ndarray          # (ne, 2) from the primal mesh
    primal_vertices: np.ndarray = field(repr=False, default=None)

    @property
    def n_cells(self) -> int:
        return len(self.fans)

    @property
    def n_edges(self) -> int:
        return len(self.midpoints)

    @property
    def dual_vertices(self) -> np.ndarray:
        """Centroids, then edge midpoints, then primal boundary vertices."""
        return np.vstack([self.centroids, self.midpoints, self.primal_vertices[self.boundary_vertices]])

    def dual_edge(self, e: int) -> np.ndarray:
        """Poly-line crossing primal edge e: centroid, midpoint[, centroid]."""
        t0, t1 = self.edge_triangles[e]
        points = [self.centroids[t0], self.midpoints[e]]
        if t1 >= 0:
            points.append(self.centroids[t1])
        return np.array(points)


def build_dual_complex(tri: Triangulation) -> DualComplex:
    _, _, anchor, corners, eta0, xi0 = _micro_topology(tri)
    n_half = 2 * tri.n_edges
    right = np.full(n_half, -1, dtype=np.int64)
    left = np.full(n_half, -1, dtype=np.int64)
    cells = np.arange(len(anchor))
    right[eta0] = cells
    left[xi0] = cells
    successor = right[xi0]

    fans: List[np.ndarray] = []
    by_vertex = np.argsort(anchor, kind="stable")
    starts = np.searchsorted(anchor[by_vertex], np.arange(tri.n_vertices + 1))
    is_boundary = np.zeros(tri.n_vertices, dtype=bool)
    for v in range(tri.n_vertices):
        members = by_vertex[starts[v]:starts[v + 1]]
        if len(members) == 0:
            raise MeshTopologyError(f"vertex {v} belongs to no triangle")
        open_starts = members[left[eta0[members]] < 0]
        if len(open_starts) > 1:
            raise MeshTopologyError(f"vertex {v} is non-manifold ({len(open_starts)} boundary fans)")
        start = int(open_starts[0]) if len(open_starts) else int(members.min())
        is_boundary[v] = len(open_starts) == 1
        fan = [start]
        while True:
            nxt = int(successor[fan[-1]])
            if nxt < 0 or nxt == start:
                break
            fan.append(nxt)
        if len(fan) != len(members):
            raise MeshTopologyError(f"vertex {v} is non-manifold (fan covers {len(fan)} of {len(members)} cells)")
        fans.append(np.array(fan, dtype=np.int64))

    cell_areas = np.bincount(anchor, weights=_quad_areas(corners), minlength=tri.n_vertices)
    dual = DualComplex(
        centroids=tri.centroids,
        midpoints=tri.midpoints,
        boundary_vertices=np.flatnonzero(is_boundary),
        fans=fans,
        is_boundary=is_boundary,
        cell_areas=cell_areas,
        edge_triangles=tri.edge_triangles,
        primal_vertices=tri.vertices,
    )
    logger.info(
        f"Mesh: dual complex with {dual.n_cells} cells "
        f"({len(dual.boundary_vertices)} on the boundary), {dual.n_edges} dual edges"
    )
    return dual


@dataclass(frozen=True, eq=False)
class MicroCellMesh:
    """Quadrilateral micro-cells with their adjacency tables."""
    triangulation: Triangulation
    dual: DualComplex
    corners: np.ndarray          # (nc, 4, 2)
    triangle: np.ndarray         # (nc,) parent triangle
    vertex: np.ndarray           # (nc,) parent dual cell = anchor primal vertex
    local: np.ndarray            # (nc,) k in cell id 3t+k
    eta0: np.ndarray             # (nc,) half-edge id of {η=0}
    xi0: np.ndarray              # (nc,) half-edge id of {ξ=0}
    xi1: np.ndarray              # (nc,) segment id of {ξ=1}
    eta1: np.ndarray             # (nc,) segment id of {η=1}
    half_left: np.ndarray        # (2 ne,) K_L or -1
    half_right: np.ndarray       # (2 ne,) K_R or -1
    areas: np.ndarray            # (nc,)

    @property
    def n_cells(self) -> int:
        return len(self.corners)

    @property
    def n_half_edges(self) -> int:
        return len(self.half_left)

    @property
    def n_segments(self) -> int:
        return 3 * self.triangulation.n_triangles

    def cell(self, c: int) -> rm.CellGeometry:
        return rm.CellGeometry(self.corners[c])

    def segment_cells(self) -> Tuple[np.ndarray, np.ndarray]:
        """(left, right) cells of every primal-interior segment."""
        seg = np.arange(self.n_segments)
        t, k = seg // 3, seg % 3
        return 3 * t + k, 3 * t + (k + 1) % 3

    def boundary_faces(self) -> Tuple[np.ndarray, np.ndarray]:
        """Boolean (nc,) flags: {η=0} on ∂Ω, {ξ=0} on ∂Ω."""
        return self.half_left[self.eta0] < 0, self.half_right[self.xi0] < 0

    def interior_edges(self) -> pd.DataFrame:
        """One record per interior micro-edge: (left, right, class, id)."""
        shared = np.flatnonzero((self.half_left >= 0) & (self.half_right >= 0))
        seg_left, seg_right = self.segment_cells()
        return pd.DataFrame({
            "left": np.r_[self.half_left[shared], seg_left],
            "right": np.r_[self.half_right[shared], seg_right],
            "edge_class": [DUAL_INTERIOR] * len(shared) + [PRIMAL_INTERIOR] * len(seg_left),
            "index": np.r_[shared, np.arange(self.n_segments)],
        })

    def boundary_edges(self) -> pd.DataFrame:
        """One record per boundary micro-edge: (cell, local edge, marker)."""
        tri = self.triangulation
        open_halves = np.flatnonzero((self.half_left < 0) | (self.half_right < 0))
        right = self.half_right[open_halves]
        cell = np.where(right >= 0, right, self.half_left[open_halves])
        local = np.where(right >= 0, ETA0, XI0)
        return pd.DataFrame({
            "cell": cell,
            "local_edge": local,
            "marker": tri.edge_markers[open_halves // 2],
            "half_edge": open_halves,
        })

    def locate(self, x: float, y: float) -> Tuple[int, float, float]:
        """Micro-cell and reference coordinates containing a physical point."""
        lo, hi = self.corners.min(axis=1), self.corners.max(axis=1)
        slack = 1e-12 * max(self.triangulation.mesh_size, 1.0)
        candidates = np.flatnonzero(
            (lo[:, 0] - slack <= x) & (x <= hi[:, 0] + slack) & (lo[:, 1] - slack <= y) & (y <= hi[:, 1] + slack)
        )
        for c in candidates:
            try:
                xi, eta = rm.inverse_map(self.cell(int(c)), x, y)
            except GeometryError:
                continue
            if -1e-10 <= xi <= 1 + 1e-10 and -1e-10 <= eta <= 1 + 1e-10:
                return int(c), min(max(xi, 0.0), 1.0), min(max(eta, 0.0), 1.0)
        raise ValueError(f"point ({x}, {y}) lies outside the mesh")


def build_micro_cells(tri: Triangulation, dual: Optional[DualComplex] = None) -> MicroCellMesh:
    dual = dual if dual is not None else build_dual_complex(tri)
    t, k, anchor, corners, eta0, xi0 = _micro_topology(tri)
    nc = len(anchor)

    ref = np.array([0.0, 1.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0, 1.0])
    J_corners = rm.determinants(rm.jacobians(corners, *ref))
    scale = np.max(np.sum((corners - np.roll(corners, 1, axis=1)) ** 2, axis=-1), axis=-1)
    bad = np.any(J_corners <= 1e-14 * scale[:, None], axis=1)
    if np.any(bad):
        c = int(np.argmax(bad))
        raise MeshQualityError("degenerate micro-cell (corner Jacobian ≤ 0)", int(t[c]))

    n_half = 2 * tri.n_edges
    half_left = np.full(n_half, -1, dtype=np.int64)
    half_right = np.full(n_half, -1, dtype=np.int64)
    half_right[eta0] = np.arange(nc)
    half_left[xi0] = np.arange(nc)

    mesh = MicroCellMesh(
        triangulation=tri,
        dual=dual,
        corners=corners,
        triangle=t,
        vertex=anchor,
        local=k,
        eta0=eta0,
        xi0=xi0,
        xi1=3 * t + k,
        eta1=3 * t + (k + 2) % 3,
        half_left=half_left,
        half_right=half_right,
        areas=_quad_areas(corners),
    )
    logger.info(f"Mesh: {nc} micro-cells, {n_half} half-edges, {mesh.n_segments} primal-interior segments")
    return mesh
