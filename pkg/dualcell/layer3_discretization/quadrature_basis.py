"""
Quadrature & Lagrange Bases — 1D node families on [0, 1]
─────────────────────────────────────────────────────────
Provides:
  - primal Legendre–Gauss–Radau rules (right endpoint fixed at 1)
  - dual rules, obtained by reflecting the primal ones (left endpoint at 0)
  - Gauss–Legendre rules for exact stiffness/face integrals and error norms
  - nodal Lagrange bases evaluated in barycentric (second) form

All rules live on [0, 1]; classical [-1, 1] data is mapped affinely and the
weights are halved.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Tuple
import numpy as np
from scipy import linalg, special
from dualcell.config import get_settings
from dualcell.errors import QuadratureError
from dualcell.logging_config import get_logger

logger = get_logger(__name__)


class NodeKind(str, Enum):
    PRIMAL_LGR = "primal-lgr"
    DUAL_LGR = "dual-lgr"
    GAUSS = "gauss"


@dataclass(frozen=True, eq=False)
class NodeFamily:
    """P+1 ascending nodes and positive weights on [0, 1]."""
    kind: NodeKind
    degree: int
    nodes: np.ndarray
    weights: np.ndarray
    # The family this one was reflected from, if any
    source: Optional["NodeFamily"] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


# ═══════════════════════════════════════════════════════════════════════
# RULES
# ═══════════════════════════════════════════════════════════════════════

def _check_cap(degree: int) -> None:
    cap = get_settings().quadrature.degree_cap
    if degree < 0:
        raise QuadratureError(f"degree must be non-negative, got {degree}")
    if degree > cap:
        raise QuadratureError(f"degree {degree} exceeds the configured cap {cap}")


def _radau_jacobi_nodes(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes/weights of the n-point Radau rule on [-1, 1] with x = 1 fixed.

    Legendre Jacobi matrix whose last diagonal entry is modified so that the
    fixed end point becomes an eigenvalue.
    """
    if n == 1:
        return np.array([1.0]), np.array([2.0])
    k = np.arange(1, n)
    beta = k / np.sqrt(4.0 * k * k - 1.0)
    # (J_{n-1} - I) delta = beta_{n-1}^2 e_{n-1}
    sub = np.zeros((n - 1, n - 1))
    sub[np.arange(n - 1), np.arange(n - 1)] = -1.0
    if n > 2:
        sub[np.arange(n - 2), np.arange(1, n - 1)] = beta[:-1]
        sub[np.arange(1, n - 1), np.arange(n - 2)] = beta[:-1]
    rhs = np.zeros(n - 1)
    rhs[-1] = beta[-1] ** 2
    delta = np.linalg.solve(sub, rhs)
    diag = np.zeros(n)
    diag[-1] = 1.0 + delta[-1]
    x, vecs = linalg.eigh_tridiagonal(diag, beta)
    w = 2.0 * vecs[0, :] ** 2
    return x, w


def _radau_polish(x: np.ndarray, n: int, steps: int) -> np.ndarray:
    """Newton steps on P_n - P_{n-1} for the free nodes."""
    x = x.copy()
    free = x < 1.0 - 1e-14
    for _ in range(steps):
        xf = x[free]
        pn = special.eval_legendre(n, xf)
        pm = special.eval_legendre(n - 1, xf)
        pm2 = special.eval_legendre(n - 2, xf) if n >= 2 else np.zeros_like(xf)
        # P_k'(x) = k (x P_k - P_{k-1}) / (x^2 - 1)
        dpn = n * (xf * pn - pm) / (xf * xf - 1.0)
        dpm = (n - 1) * (xf * pm - pm2) / (xf * xf - 1.0)
        x[free] = xf - (pn - pm) / (dpn - dpm)
    return x


@lru_cache(maxsize=None)
def lgr_rule(degree: int) -> NodeFamily:
    """Primal LGR family: P+1 nodes, last node exactly 1, exact to degree 2P."""
    _check_cap(degree)
    n = degree + 1
    x, w = _radau_jacobi_nodes(n)
    if n > 1:
        x = _radau_polish(x, n, get_settings().quadrature.newton_polish_steps)
        x[-1] = 1.0
        pm = special.eval_legendre(n - 1, x[:-1])
        w = np.empty(n)
        w[:-1] = (1.0 + x[:-1]) / (n * n * pm * pm)
        w[-1] = 2.0 / (n * n)
    order = np.argsort(x)
    nodes = 0.5 * (x[order] + 1.0)
    nodes[-1] = 1.0
    weights = 0.5 * w[order]
    weights.setflags(write=False)
    nodes.setflags(write=False)
    logger.debug(f"Quadrature: LGR rule P={degree} built")
    return NodeFamily(NodeKind.PRIMAL_LGR, degree, nodes, weights)


def reflect_rule(family: NodeFamily) -> NodeFamily:
    """Reflect a family by xi -> 1 - xi; reflecting twice returns the original object."""
    if family.source is not None:
        return family.source
    kind = {
        NodeKind.PRIMAL_LGR: NodeKind.DUAL_LGR,
        NodeKind.DUAL_LGR: NodeKind.PRIMAL_LGR,
        NodeKind.GAUSS: NodeKind.GAUSS,
    }[family.kind]
    nodes = 1.0 - family.nodes[::-1]
    if kind == NodeKind.DUAL_LGR:
        nodes[0] = 0.0
    elif kind == NodeKind.PRIMAL_LGR:
        nodes[-1] = 1.0
    weights = family.weights[::-1].copy()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return NodeFamily(kind, family.degree, nodes, weights, source=family)


@lru_cache(maxsize=None)
def dual_rule(primal: NodeFamily) -> NodeFamily:
    """Dual LGR family: nodes 1 - xi_{P-i}, weights w_{P-i}, first node exactly 0."""
    if primal.kind != NodeKind.PRIMAL_LGR:
        raise QuadratureError(f"dual_rule expects a primal LGR family, got {primal.kind.value}")
    return reflect_rule(primal)


@lru_cache(maxsize=None)
def gauss_rule(points: int) -> NodeFamily:
    """m-point Gauss–Legendre rule on [0, 1], exact to degree 2m-1."""
    if points < 1:
        raise QuadratureError(f"Gauss rule needs at least one point, got {points}")
    _check_cap(points - 1)
    x, w = special.roots_legendre(points)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return NodeFamily(NodeKind.GAUSS, points - 1, nodes, weights)


def tensor_rule(family: NodeFamily) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """2D tensorised rule: (xi, eta, weight) flattened with xi running fastest."""
    xi = np.tile(family.nodes, family.size)
    eta = np.repeat(family.nodes, family.size)
    weights = np.outer(family.weights, family.weights).ravel()
    return xi, eta, weights


# ═══════════════════════════════════════════════════════════════════════
# LAGRANGE BASIS
# ═══════════════════════════════════════════════════════════════════════

class LagrangeBasis:
    """Nodal Lagrange polynomials of a family, evaluated in barycentric form."""

    def __init__(self, family: NodeFamily):
        self.family = family
        x = np.asarray(family.nodes, dtype=float)
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1.0)
        self.bary_weights = 1.0 / np.prod(diff, axis=1)
        # D[k, j] = l_j'(x_k)
        d = (self.bary_weights[None, :] / self.bary_weights[:, None]) / diff
        np.fill_diagonal(d, 0.0)
        np.fill_diagonal(d, -d.sum(axis=1))
        self.diff_matrix = d

    @property
    def degree(self) -> int:
        return self.family.degree

    @property
    def size(self) -> int:
        return self.family.size

    def tabulate(self, x) -> np.ndarray:
        """Values l_i(x_q) with shape (len(x), P+1)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        nodes = self.family.nodes
        diff = x[:, None] - nodes[None, :]
        exact = np.isclose(diff, 0.0, rtol=0.0, atol=1e-15)
        hit = exact.any(axis=1)
        safe = np.where(exact, 1.0, diff)
        terms = self.bary_weights[None, :] / safe
        table = terms / terms.sum(axis=1, keepdims=True)
        if hit.any():
            table[hit] = exact[hit].astype(float)
        return table

    def tabulate_deriv(self, x) -> np.ndarray:
        """Derivatives l_i'(x_q) with shape (len(x), P+1)."""
        return self.tabulate(x) @ self.diff_matrix

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.size:
            raise QuadratureError(f"basis index {i} out of range 0..{self.size - 1}")

    def eval(self, i: int, x: float) -> float:
        self._check_index(i)
        return float(self.tabulate(x)[0, i])

    def deriv(self, i: int, x: float) -> float:
        self._check_index(i)
        return float(self.tabulate_deriv(x)[0, i])


def lagrange_eval(basis: LagrangeBasis, i: int, x: float) -> float:
    return basis.eval(i, x)


def lagrange_deriv(basis: LagrangeBasis, i: int, x: float) -> float:
    return basis.deriv(i, x)
