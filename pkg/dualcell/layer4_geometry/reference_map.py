"""
Reference Map — bilinear micro-cell geometry
────────────────────────────────────────────
Each quadrilateral micro-cell K is the image of the unit square under

    F_K(ξ, η) = (1−ξ)(1−η) v¹ + ξ(1−η) v² + ξη v³ + (1−ξ)η v⁴

This module evaluates F_K, its Jacobian dF_K and determinant J_K, the metric
matrices G = dF⁻¹ J dF⁻ᵀ and Hm = dFᵀ J⁻¹ dF, and the three pushforwards
  - grad: point values are kept
  - curl: dF⁻ᵀ v̂ (tangential traces kept)
  - div:  J⁻¹ dF ŵ (normal traces kept)

Single-cell functions take a CellGeometry; the vectorised variants take a
corner array of shape (n_cells, 4, 2) and reference points of shape (n_q,).
"""
from __future__ import annotations
from dataclasses import dataclass
from enum import Enum
from typing import Tuple
import numpy as np
from dualcell.config import get_settings
from dualcell.errors import GeometryError


class FieldKind(str, Enum):
    GRAD = "grad"
    CURL = "curl"
    DIV = "div"


@dataclass(frozen=True)
class CellGeometry:
    """The four corners v¹..v⁴ of one micro-cell, counter-clockwise."""
    corners: np.ndarray

    @classmethod
    def from_points(cls, v1, v2, v3, v4) -> "CellGeometry":
        return cls(np.array([v1, v2, v3, v4], dtype=float))

    @property
    def scale(self) -> float:
        return float(np.max(np.linalg.norm(self.corners - np.roll(self.corners, 1, axis=0), axis=1)))


@dataclass(frozen=True)
class MetricSample:
    point: Tuple[float, float]
    J: float
    dF: np.ndarray
    G: np.ndarray
    Hm: np.ndarray


# ═══════════════════════════════════════════════════════════════════════
# VECTORISED KERNELS
# ═══════════════════════════════════════════════════════════════════════

def map_points(corners: np.ndarray, xi, eta) -> np.ndarray:
    """F_K at every (cell, point): shape (n_cells, n_q, 2)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))[None, :, None]
    eta = np.atleast_1d(np.asarray(eta, dtype=float))[None, :, None]
    v1, v2, v3, v4 = (corners[:, None, k, :] for k in range(4))
    return (1 - xi) * (1 - eta) * v1 + xi * (1 - eta) * v2 + xi * eta * v3 + (1 - xi) * eta * v4


def jacobians(corners: np.ndarray, xi, eta) -> np.ndarray:
    """dF_K with shape (n_cells, n_q, 2, 2); column 0 is ∂ξF, column 1 is ∂ηF."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))[None, :, None]
    eta = np.atleast_1d(np.asarray(eta, dtype=float))[None, :, None]
    v1, v2, v3, v4 = (corners[:, None, k, :] for k in range(4))
    d_xi = (v2 - v1) * (1 - eta) + (v3 - v4) * eta
    d_eta = (v4 - v1) * (1 - xi) + (v3 - v2) * xi
    return np.stack([d_xi, d_eta], axis=-1)


def determinants(dF: np.ndarray) -> np.ndarray:
    return dF[..., 0, 0] * dF[..., 1, 1] - dF[..., 0, 1] * dF[..., 1, 0]


def _adjugate(dF: np.ndarray) -> np.ndarray:
    adj = np.empty_like(dF)
    adj[..., 0, 0] = dF[..., 1, 1]
    adj[..., 1, 1] = dF[..., 0, 0]
    adj[..., 0, 1] = -dF[..., 0, 1]
    adj[..., 1, 0] = -dF[..., 1, 0]
    return adj


def check_regular(J: np.ndarray, corners: np.ndarray) -> None:
    """Raise GeometryError where |J| falls below the relative singularity threshold."""
    rtol = get_settings().geometry.singular_jacobian_rtol
    edges = corners - np.roll(corners, 1, axis=1)
    scale2 = np.max(np.sum(edges * edges, axis=-1), axis=-1)
    bad = np.abs(J) < rtol * scale2.reshape((-1,) + (1,) * (J.ndim - 1))
    if np.any(bad):
        cell = int(np.argwhere(bad)[0][0])
        raise GeometryError(f"singular Jacobian on micro-cell {cell}")


def metric_tensors(dF: np.ndarray, J: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """G = adj(dF) adj(dF)ᵀ / J and Hm = dFᵀ dF / J, broadcast over leading axes."""
    adj = _adjugate(dF)
    G = np.einsum("...ik,...jk->...ij", adj, adj) / J[..., None, None]
    Hm = np.einsum("...ki,...kj->...ij", dF, dF) / J[..., None, None]
    return G, Hm


def inverse_transpose(dF: np.ndarray, J: np.ndarray) -> np.ndarray:
    """dF⁻ᵀ = adj(dF)ᵀ / J."""
    return np.swapaxes(_adjugate(dF), -1, -2) / J[..., None, None]


def push_curl(dF: np.ndarray, J: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", inverse_transpose(dF, J), v)


def push_div(dF: np.ndarray, J: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", dF, w) / J[..., None]


def pull_curl(dF: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Inverse of push_curl: v̂ = dFᵀ f."""
    return np.einsum("...ji,...j->...i", dF, f)


def pull_div(dF: np.ndarray, J: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Inverse of push_div: ŵ = J dF⁻¹ f = adj(dF) f."""
    return np.einsum("...ij,...j->...i", _adjugate(dF), f)


# ═══════════════════════════════════════════════════════════════════════
# SINGLE-CELL OPERATIONS
# ═══════════════════════════════════════════════════════════════════════

def map_point(K: CellGeometry, xi: float, eta: float) -> np.ndarray:
    return map_points(K.corners[None], xi, eta)[0, 0]


def metric_sample(K: CellGeometry, xi: float, eta: float) -> MetricSample:
    dF = jacobians(K.corners[None], xi, eta)[0, 0]
    J = float(determinants(dF))
    check_regular(np.array([J]), K.corners[None])
    G, Hm = metric_tensors(dF, np.asarray(J))
    return MetricSample(point=(float(xi), float(eta)), J=J, dF=dF, G=G, Hm=Hm)


def pushforward_eval(kind: FieldKind, K: CellGeometry, value, xi: float, eta: float):
    """Physical value of a reference field sampled at (ξ, η)."""
    kind = FieldKind(kind)
    if kind == FieldKind.GRAD:
        return float(np.asarray(value))
    vec = np.asarray(value, dtype=float)
    if vec.shape != (2,):
        raise GeometryError(f"{kind.value} pushforward expects a 2-vector, got shape {vec.shape}")
    sample = metric_sample(K, xi, eta)
    J = np.asarray(sample.J)
    if kind == FieldKind.CURL:
        return push_curl(sample.dF, J, vec)
    return push_div(sample.dF, J, vec)


def inverse_map(K: CellGeometry, x: float, y: float) -> Tuple[float, float]:
    """Reference coordinates of a physical point by Newton iteration on F_K."""
    settings = get_settings().geometry
    target = np.array([x, y], dtype=float)
    ref = np.array([0.5, 0.5])
    tol = settings.inverse_map_tol * max(K.scale, 1.0)
    for _ in range(settings.inverse_map_max_iter):
        residual = map_point(K, ref[0], ref[1]) - target
        if np.linalg.norm(residual) <= tol:
            return float(ref[0]), float(ref[1])
        dF = jacobians(K.corners[None], ref[0], ref[1])[0, 0]
        try:
            ref = ref - np.linalg.solve(dF, residual)
        except np.linalg.LinAlgError as exc:
            raise GeometryError(f"inverse map hit a singular Jacobian at {ref}") from exc
    residual = map_point(K, ref[0], ref[1]) - target
    if np.linalg.norm(residual) <= tol:
        return float(ref[0]), float(ref[1])
    raise GeometryError(
        f"inverse map did not converge for ({x}, {y}) in {settings.inverse_map_max_iter} iterations"
    )
