"""
Spectra — dense generalized eigenproblem and analytic matching
──────────────────────────────────────────────────────────────
  - assemble_pencil:   S = C M_e⁻¹ Cᵀ and M = M_h, densified (desk scale only)
  - solve_generalized: k smallest eigenvalues of (S, M) with residuals
  - match_spectrum:    greedy multiset matching against n² + k² targets
"""
from __future__ import annotations
import math
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Sequence
import numpy as np
import pandas as pd
from scipy import linalg
from dualcell.config import get_settings
from dualcell.errors import SpectrumError
from dualcell.layer3_discretization.assembly import BlockDiagonalMatrix, BoundaryMode, SparseOperator
from dualcell.logging_config import get_logger

logger = get_logger(__name__)

NEAR_ZERO_RTOL = 1e-6


class Pencil(NamedTuple):
    S: np.ndarray
    M: np.ndarray
    asymmetry: float


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def max_residual(self) -> float:
        return float(np.max(self.residuals, initial=0.0))

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "index": np.arange(self.count),
            "lambda": self.eigenvalues,
            "residual": self.residuals,
        })


@dataclass(frozen=True)
class SpectrumMatch:
    """Per-target matches; `excluded` counts near-zero modes left out of the matching."""
    table: pd.DataFrame
    excluded: int

    @property
    def errors(self) -> np.ndarray:
        return self.table["rel_error"].to_numpy()


def _densify(M) -> np.ndarray:
    if isinstance(M, BlockDiagonalMatrix):
        return M.to_sparse().toarray()
    if hasattr(M, "toarray"):
        return M.toarray()
    return np.asarray(M, dtype=float)


def assemble_pencil(C: SparseOperator, Minv_e: BlockDiagonalMatrix, M_h: BlockDiagonalMatrix) -> Pencil:
    cap = get_settings().solver.dense_cap
    n = C.shape[0]
    if n > cap:
        raise SpectrumError(f"h-space dimension {n} exceeds the dense solver cap {cap}")
    Me_inv = Minv_e.to_sparse() if isinstance(Minv_e, BlockDiagonalMatrix) else Minv_e
    S = np.asarray((C @ Me_inv @ C.T).toarray(), dtype=float) if C.nnz else np.zeros((n, n))
    scale = float(np.max(np.abs(S), initial=0.0))
    asymmetry = float(np.max(np.abs(S - S.T), initial=0.0))
    S = 0.5 * (S + S.T)
    M = _densify(M_h)
    logger.debug(f"Spectra: pencil n={n}, ‖S‖_max={scale:.3e}, asymmetry={asymmetry:.2e}")
    return Pencil(S, 0.5 * (M + M.T), asymmetry)


def solve_generalized(S: np.ndarray, M: np.ndarray, k: int,
                      metadata: Optional[Dict[str, object]] = None) -> SpectrumResult:
    """k smallest eigenvalues of S h = λ M h (Cholesky reduction inside LAPACK)."""
    n = S.shape[0]
    if k < 1:
        raise SpectrumError(f"requested eigenvalue count must be ≥ 1, got {k}")
    k = min(k, n)
    try:
        values, vectors = linalg.eigh(S, M, subset_by_index=[0, k - 1])
    except (linalg.LinAlgError, ValueError) as exc:
        raise SpectrumError(f"mass matrix is not SPD: {exc}") from exc
    residual = S @ vectors - (M @ vectors) * values[None, :]
    norms = np.linalg.norm(vectors, axis=0)
    residuals = np.linalg.norm(residual, axis=0) / np.where(norms > 0, norms, 1.0)
    top = float(np.max(np.abs(values), initial=0.0))
    if values.size and values[0] < -1e-9 * max(top, 1.0):
        logger.warning(f"Spectra: negative eigenvalue {values[0]:.3e} in a semidefinite pencil")
    return SpectrumResult(values, residuals, dict(metadata or {}))


def analytic_square_spectrum(max_value: float, side: float = math.pi, boundary: str = "dirichlet") -> np.ndarray:
    """Laplace eigenvalues (π/side)²(n² + k²) ≤ max_value with multiplicity, ascending."""
    if boundary not in ("dirichlet", "neumann"):
        raise ValueError(f"unknown boundary '{boundary}'")
    unit = (math.pi / side) ** 2
    start = 1 if boundary == "dirichlet" else 0
    top = int(math.isqrt(int(max_value / unit) + 1)) + 1
    idx = np.arange(start, top + 1)
    values = unit * (idx[:, None] ** 2 + idx[None, :] ** 2).ravel()
    return np.sort(values[values <= max_value * (1 + 1e-12)])


def analytic_for_mode(bc: BoundaryMode) -> str:
    """Magnetic wall pins the scalar field (Dirichlet); electric wall leaves it free (Neumann)."""
    return "dirichlet" if BoundaryMode(bc) == BoundaryMode.MAGNETIC_WALL else "neumann"


def match_spectrum(result: SpectrumResult, targets: Sequence[float]) -> SpectrumMatch:
    targets = np.sort(np.asarray(targets, dtype=float))
    if targets.size == 0:
        return SpectrumMatch(pd.DataFrame(columns=["index", "lambda", "target", "rel_error"]), 0)
    first = targets[targets > 0][0] if np.any(targets > 0) else 1.0
    values = result.eigenvalues
    keep = np.flatnonzero(values >= NEAR_ZERO_RTOL * first)
    positive_targets = targets[targets > 0]
    excluded = len(values) - len(keep)
    if len(keep) < len(positive_targets):
        raise SpectrumError(
            f"{len(keep)} eigenvalues above the near-zero threshold cannot cover {len(positive_targets)} targets"
        )
    used = np.zeros(len(keep), dtype=bool)
    rows = []
    for target in positive_targets:
        free = np.flatnonzero(~used)
        j = free[np.argmin(np.abs(values[keep[free]] - target))]
        used[j] = True
        lam = float(values[keep[j]])
        rows.append({"index": int(keep[j]), "lambda": lam, "target": float(target),
                     "rel_error": abs(lam - target) / abs(target)})
    if excluded:
        logger.info(f"Spectra: excluded {excluded} near-zero mode(s) from matching")
    return SpectrumMatch(pd.DataFrame(rows), excluded)


def spectrum_rows(match: SpectrumMatch, h: float, degree: int, bc: BoundaryMode) -> pd.DataFrame:
    """Rows of the `h,P,bc,index,lambda,target,rel_error` table."""
    table = match.table.copy()
    table.insert(0, "bc", BoundaryMode(bc).value)
    table.insert(0, "P", degree)
    table.insert(0, "h", h)
    return table[["h", "P", "bc", "index", "lambda", "target", "rel_error"]]
