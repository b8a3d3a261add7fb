"""
Dynamics — leapfrog stepping, CFL estimation, sources and observers
────────────────────────────────────────────────────────────────────
Both first-order systems share one semi-discrete form

    M_s ṡ = −C u + src_s        s = h (Maxwell) or q (acoustic), primal scalar
    M_u u̇ =  Cᵀ s + src_u       u = e (Maxwell) or v (acoustic), dual vector

and the staggered update

    u^{n+1}   = u^n       + Δt M_u⁻¹ (Cᵀ s^{n+1/2} + src_u((n+½)Δt))
    s^{n+3/2} = s^{n+1/2} − Δt M_s⁻¹ (C u^{n+1}    − src_s((n+1)Δt))

started by the half step s^{1/2} = s⁰ − Δt/2 M_s⁻¹ (C u⁰ − src_s(0)).
Only sparse products and block-diagonal solves occur inside the loop.
"""
from __future__ import annotations
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import numpy as np
import pandas as pd
from dualcell.config import get_settings
from dualcell.errors import DivergenceError, NonConvergenceError
from dualcell.layer3_discretization.assembly import (
    BlockDiagonalMatrix, BoundaryMode, SparseOperator, WaveSystem,
)
from dualcell.layer3_discretization.fe_spaces import (
    DofMap, FieldVector, Grid, evaluate_field, interpolate, write_snapshot,
)
from dualcell.logging_config import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class WaveOperators:
    """Everything the stepper needs: coupling C (rows primal), masses and their inverses."""
    system: WaveSystem
    bc: BoundaryMode
    primal_space: DofMap
    dual_space: DofMap
    C: SparseOperator
    M_primal: BlockDiagonalMatrix
    M_dual: BlockDiagonalMatrix
    Minv_primal: BlockDiagonalMatrix
    Minv_dual: BlockDiagonalMatrix
    # Unit-coefficient masses, used to project sources
    unit_primal: Optional[BlockDiagonalMatrix] = None
    unit_dual: Optional[BlockDiagonalMatrix] = None
    CT: SparseOperator = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "CT", self.C.T.tocsr())

    @property
    def n_primal(self) -> int:
        return self.C.shape[0]

    @property
    def n_dual(self) -> int:
        return self.C.shape[1]


@dataclass
class FieldState:
    """Staggered pair: dual field at nΔt, primal field at (n+½)Δt and (n−½)Δt."""
    primal: np.ndarray
    primal_prev: np.ndarray
    dual: np.ndarray
    step: int
    dt: float
    t0: float = 0.0

    @property
    def t(self) -> float:
        return self.t0 + self.step * self.dt

    def copy(self) -> "FieldState":
        return replace(self, primal=self.primal.copy(), primal_prev=self.primal_prev.copy(), dual=self.dual.copy())

    def reversed(self) -> "FieldState":
        """Same instant with mirrored stagger, ready to step backwards in time."""
        return FieldState(
            primal=self.primal_prev.copy(),
            primal_prev=self.primal.copy(),
            dual=self.dual.copy(),
            step=0,
            dt=-self.dt,
            t0=self.t,
        )

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.primal), initial=0.0), np.max(np.abs(self.dual), initial=0.0)))


# ═══════════════════════════════════════════════════════════════════════
# SOURCES
# ═══════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class SourceTerm:
    """Space-time source f(x, y, t), lumped-projected onto the primal or dual space."""
    func: Callable
    target: Grid
    scale: float = 1.0

    @classmethod
    def current(cls, J: Callable) -> "SourceTerm":
        """Electric current density: ε Ė = curl H − J."""
        return cls(J, Grid.DUAL, -1.0)

    @classmethod
    def forcing(cls, f: Callable) -> "SourceTerm":
        """Pressure forcing: q̇/(ρc²) + div V = f."""
        return cls(f, Grid.PRIMAL, 1.0)

    def rate(self, ops: WaveOperators, t: float) -> np.ndarray:
        """M⁻¹ M₁ Π f(·, t): the contribution to the time derivative of the target field."""
        if self.target == Grid.PRIMAL:
            space, unit, Minv = ops.primal_space, ops.unit_primal, ops.Minv_primal
        else:
            space, unit, Minv = ops.dual_space, ops.unit_dual, ops.Minv_dual
        nodal = interpolate(space, lambda x, y: self.func(x, y, t)).values
        projected = unit @ nodal if unit is not None else nodal
        return self.scale * (Minv @ projected)


def _source_rate(sources: Sequence[SourceTerm], target: Grid, ops: WaveOperators, t: float, n: int):
    total = np.zeros(n)
    for src in sources:
        if src.target == target:
            total += src.rate(ops, t)
    return total


# ═══════════════════════════════════════════════════════════════════════
# CFL
# ═══════════════════════════════════════════════════════════════════════

def estimate_lambda_max(C: SparseOperator, Minv_e: BlockDiagonalMatrix, Minv_h: BlockDiagonalMatrix,
                        tol: Optional[float] = None, max_iters: Optional[int] = None) -> float:
    """Largest eigenvalue of C M_e⁻¹ Cᵀ h = λ M_h h by power iteration on M_h⁻¹ C M_e⁻¹ Cᵀ."""
    settings = get_settings().solver
    tol = settings.power_tol if tol is None else tol
    max_iters = settings.power_max_iters if max_iters is None else max_iters
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    n = C.shape[0]
    if C.nnz == 0 or n == 0:
        return 0.0
    M_h = Minv_h.invert()
    CT = C.T.tocsr()
    x = np.random.default_rng(settings.power_seed).uniform(0.5, 1.5, n)
    x /= math.sqrt(x @ (M_h @ x))
    lam_prev = None
    lam = 0.0
    for it in range(1, max_iters + 1):
        y = CT @ x
        z = Minv_e @ y
        lam = float(y @ z) / float(x @ (M_h @ x))
        if lam == 0.0:
            return 0.0
        if lam_prev is not None and abs(lam - lam_prev) < tol * abs(lam):
            logger.debug(f"Dynamics: power iteration converged in {it} iterations, λ_max={lam:.10g}")
            return lam
        lam_prev = lam
        x = Minv_h @ (C @ z)
        x /= math.sqrt(x @ (M_h @ x))
    raise NonConvergenceError(
        f"power iteration did not converge in {max_iters} iterations", estimate=lam, iterate=x
    )


def cfl_timestep(lam_max: float, safety: Optional[float] = None) -> float:
    """safety · 2/√λ_max; infinite when λ_max = 0."""
    safety = get_settings().solver.safety_factor if safety is None else safety
    if lam_max < 0:
        raise ValueError(f"λ_max must be non-negative, got {lam_max}")
    if not 0 < safety <= 1:
        raise ValueError(f"safety factor must lie in (0, 1], got {safety}")
    if lam_max == 0:
        return math.inf
    return safety * 2.0 / math.sqrt(lam_max)


def plan_steps(t_end: float, dt_max: float) -> Tuple[int, float]:
    """Smallest step count reaching t_end with Δt ≤ dt_max, and that Δt."""
    if t_end <= 0:
        return 0, dt_max
    n = max(1, math.ceil(t_end / dt_max - 1e-12))
    return n, t_end / n


# ═══════════════════════════════════════════════════════════════════════
# LEAPFROG
# ═══════════════════════════════════════════════════════════════════════

def initial_state(s0: np.ndarray, u0: np.ndarray, ops: WaveOperators, dt: float,
                  sources: Sequence[SourceTerm] = ()) -> FieldState:
    """Half-step initialiser: s^{±1/2} = s⁰ ∓ Δt/2 M_s⁻¹ (C u⁰ − src_s(0))."""
    s0 = np.asarray(s0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    if s0.shape != (ops.n_primal,) or u0.shape != (ops.n_dual,):
        raise ValueError(f"initial data shapes {s0.shape}, {u0.shape} do not match ({ops.n_primal},), ({ops.n_dual},)")
    rate = ops.Minv_primal @ (ops.C @ u0) - _source_rate(sources, Grid.PRIMAL, ops, 0.0, ops.n_primal)
    return FieldState(primal=s0 - 0.5 * dt * rate, primal_prev=s0 + 0.5 * dt * rate, dual=u0.copy(), step=0, dt=dt)


def synchronized_primal(state: FieldState, ops: WaveOperators, sources: Sequence[SourceTerm] = ()) -> np.ndarray:
    """Primal field at the dual field's instant nΔt."""
    rate = ops.Minv_primal @ (ops.C @ state.dual) - _source_rate(sources, Grid.PRIMAL, ops, state.t, ops.n_primal)
    return state.primal + 0.5 * state.dt * rate


def leapfrog_step(state: FieldState, ops: WaveOperators, sources: Sequence[SourceTerm] = ()) -> None:
    """Advance in place by one step."""
    dt = state.dt
    t_half = state.t + 0.5 * dt
    du = ops.Minv_dual @ (ops.CT @ state.primal)
    if sources:
        du += _source_rate(sources, Grid.DUAL, ops, t_half, ops.n_dual)
    state.dual += dt * du
    state.primal_prev = state.primal
    ds = ops.Minv_primal @ (ops.C @ state.dual)
    if sources:
        ds -= _source_rate(sources, Grid.PRIMAL, ops, state.t + dt, ops.n_primal)
    state.primal = state.primal - dt * ds
    state.step += 1


def discrete_energy(state: FieldState, M_h: BlockDiagonalMatrix, M_e: BlockDiagonalMatrix,
                    averaged: bool = False) -> float:
    """Discrete energy at the dual field's instant.

    Default form ½ uᵀM_u u + ½ s^{n−1/2}ᵀ M_s s^{n+1/2} is conserved exactly by
    the stagger (without sources). `averaged=True` uses s̄ = (s^{n−1/2}+s^{n+1/2})/2
    in ½ s̄ᵀM_s s̄ instead, which oscillates at O(Δt²).
    """
    kinetic = 0.5 * float(state.dual @ (M_e @ state.dual))
    if averaged:
        mean = 0.5 * (state.primal + state.primal_prev)
        return kinetic + 0.5 * float(mean @ (M_h @ mean))
    return kinetic + 0.5 * float(state.primal_prev @ (M_h @ state.primal))


class Observer:
    """Stride-driven hook called after the initial state and after every stride-th step."""
    name = "observer"

    def __init__(self, stride: int = 1):
        if stride < 1:
            raise ValueError(f"stride must be ≥ 1, got {stride}")
        self.stride = stride
        self.records: List[dict] = []

    def wants(self, step: int) -> bool:
        return step % self.stride == 0

    def observe(self, state: FieldState, ops: WaveOperators) -> None:
        raise NotImplementedError

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records)


class EnergyObserver(Observer):
    name = "energy"

    def observe(self, state: FieldState, ops: WaveOperators) -> None:
        self.records.append({
            "step": state.step, "t": state.t,
            "energy": discrete_energy(state, ops.M_primal, ops.M_dual),
        })


class ProbeObserver(Observer):
    """Primal field values at fixed physical points (sampled at its own stagger time)."""
    name = "probes"

    def __init__(self, points: Sequence[Tuple[float, float]], stride: int = 1):
        super().__init__(stride)
        self.points = [tuple(map(float, p)) for p in points]
        self._located = None

    def observe(self, state: FieldState, ops: WaveOperators) -> None:
        if self._located is None:
            self._located = [ops.primal_space.mesh.locate(x, y) for x, y in self.points]
        field_vec = FieldVector(ops.primal_space, state.primal)
        row = {"step": state.step, "t": state.t + 0.5 * state.dt}
        for k, (cell, xi, eta) in enumerate(self._located):
            row[f"probe{k}"] = evaluate_field(field_vec, cell, xi, eta)
        self.records.append(row)


class SnapshotObserver(Observer):
    name = "snapshots"

    def __init__(self, directory, stride: int = 1, density: Optional[int] = None):
        super().__init__(stride)
        self.directory = Path(directory)
        self.density = density

    def observe(self, state: FieldState, ops: WaveOperators) -> None:
        primal = write_snapshot(FieldVector(ops.primal_space, state.primal),
                                self.directory / f"primal_{state.step:06d}.csv", self.density)
        dual = write_snapshot(FieldVector(ops.dual_space, state.dual),
                              self.directory / f"dual_{state.step:06d}.csv", self.density)
        self.records.append({"step": state.step, "t": state.t, "primal": str(primal), "dual": str(dual)})


def time_series(energy: Optional[EnergyObserver] = None, probes: Optional[ProbeObserver] = None) -> pd.DataFrame:
    """`step,t,energy[,probe…]` table merged on the step index."""
    frames = [obs.frame() for obs in (energy, probes) if obs is not None and obs.records]
    if not frames:
        return pd.DataFrame(columns=["step", "t", "energy"])
    merged = frames[0]
    for other in frames[1:]:
        merged = merged.merge(other.drop(columns=["t"]), on="step", how="outer")
    return merged.sort_values("step").reset_index(drop=True)


def leapfrog_run(state: FieldState, ops: WaveOperators, n_steps: int,
                 sources: Sequence[SourceTerm] = (), observers: Sequence[Observer] = ()) -> FieldState:
    """Run n_steps leapfrog steps on a copy of the state; raises DivergenceError on blow-up."""
    state = state.copy()
    blowup = get_settings().solver.blowup_factor
    reference = state.max_abs()
    for obs in observers:
        if obs.wants(0):
            obs.observe(state, ops)
    for n in range(1, n_steps + 1):
        leapfrog_step(state, ops, sources)
        size = state.max_abs()
        if not math.isfinite(size):
            raise DivergenceError("non-finite field value", state.step)
        if reference > 0 and size > blowup * reference:
            raise DivergenceError(f"field grew to {size:.3e} (> {blowup:g} × initial {reference:.3e})", state.step)
        for obs in observers:
            if obs.wants(n):
                obs.observe(state, ops)
    logger.debug(f"Dynamics: {n_steps} steps done, t={state.t:.6g}")
    return state


# ═══════════════════════════════════════════════════════════════════════
# REFERENCE PROBLEMS
# ═══════════════════════════════════════════════════════════════════════

def sin_mode(x, y):
    return np.sin(2 * x) * np.sin(6 * y)


def sin_mode_exact(t: float) -> Callable:
    """cos(√40 t)·sin(2x)·sin(6y) on [0, π]² with zero initial dual field."""
    factor = math.cos(math.sqrt(40.0) * t)
    return lambda x, y: factor * sin_mode(x, y)


def gaussian_peak(x, y, width: float = 50.0, centre: Tuple[float, float] = (0.5, 0.5)):
    return np.exp(-(width ** 2) * ((x - centre[0]) ** 2 + (y - centre[1]) ** 2))


def zero_vector(x, y):
    return 0.0, 0.0
