"""
DualCell System — Composition Root
──────────────────────────────────
Wires: Triangulation → Barycentric dual → Micro-cells → Spaces
     → Lumped masses → Coupling operator → Leapfrog / Eigen solvers
"""
from __future__ import annotations
from typing import Callable, Dict, Optional, Sequence
import numpy as np
from dualcell.config import get_settings
from dualcell.layer2_solvers import dynamics, spectra
from dualcell.layer3_discretization.assembly import (
    BoundaryMode, MaterialField, WaveSystem, curl_operator, div_grad_operator, lumped_mass,
)
from dualcell.layer3_discretization.fe_spaces import (
    DofMap, FieldVector, Grid, SpaceKind, SpaceSpec, enumerate_dofs, interpolate,
)
from dualcell.layer4_geometry.mesh import (
    DualComplex, MicroCellMesh, Triangulation, build_dual_complex, build_micro_cells,
)
from dualcell.logging_config import get_logger

logger = get_logger(__name__)


class DualCellSystem:
    """
    Composition root for one (mesh, degree, system, boundary mode) case.

    Initialization (5 steps):
        1. Build the barycentric dual complex and the micro-cells
        2. Enumerate the primal scalar and dual vector spaces
        3. Assemble and invert the lumped masses
        4. Assemble the coupling operator (C or D)
        5. Bundle the operators for the stepper and eigensolver
    """

    def __init__(self, triangulation: Triangulation, degree: int,
                 system: WaveSystem = WaveSystem.MAXWELL,
                 bc: BoundaryMode = BoundaryMode.MAGNETIC_WALL,
                 material: Optional[MaterialField] = None):
        self._settings = get_settings()
        self.triangulation = triangulation
        self.degree = degree
        self.system = WaveSystem(system)
        self.bc = BoundaryMode(bc)
        if material is None:
            material = (MaterialField.maxwell(triangulation) if self.system == WaveSystem.MAXWELL
                        else MaterialField.acoustic(triangulation))
        if material.system != self.system:
            raise ValueError(f"material is for {material.system.value}, system is {self.system.value}")
        self.material = material
        self.dual: Optional[DualComplex] = None
        self.mesh: Optional[MicroCellMesh] = None
        self.primal_space: Optional[DofMap] = None
        self.dual_space: Optional[DofMap] = None
        self.operators: Optional[dynamics.WaveOperators] = None
        self._lambda_max: Optional[float] = None
        self._initialized = False

    @property
    def is_initialized(self) -> bool:
        return self._initialized

    @property
    def dual_kind(self) -> SpaceKind:
        return SpaceKind.CURL if self.system == WaveSystem.MAXWELL else SpaceKind.DIV

    def initialize(self) -> "DualCellSystem":
        logger.info(f"═══ DualCell {self.system.value} P={self.degree} bc={self.bc.value} ═══")

        logger.info("▸ Step 1/5: Building barycentric dual and micro-cells...")
        self.dual = build_dual_complex(self.triangulation)
        self.mesh = build_micro_cells(self.triangulation, self.dual)

        logger.info("▸ Step 2/5: Enumerating spaces...")
        self.primal_space = enumerate_dofs(SpaceSpec(kind=SpaceKind.GRAD, grid=Grid.PRIMAL, degree=self.degree), self.mesh)
        self.dual_space = enumerate_dofs(SpaceSpec(kind=self.dual_kind, grid=Grid.DUAL, degree=self.degree), self.mesh)

        logger.info("▸ Step 3/5: Assembling lumped masses...")
        M_primal = lumped_mass(self.primal_space, self.material)
        M_dual = lumped_mass(self.dual_space, self.material)
        unit = (MaterialField.maxwell(self.triangulation) if self.system == WaveSystem.MAXWELL
                else MaterialField.acoustic(self.triangulation))
        unit_primal = lumped_mass(self.primal_space, unit)
        unit_dual = lumped_mass(self.dual_space, unit)

        logger.info("▸ Step 4/5: Assembling coupling operator...")
        if self.system == WaveSystem.MAXWELL:
            C = curl_operator(self.primal_space, self.dual_space, self.bc)
        else:
            C = div_grad_operator(self.primal_space, self.dual_space, self.bc)

        logger.info("▸ Step 5/5: Bundling operators...")
        self.operators = dynamics.WaveOperators(
            system=self.system,
            bc=self.bc,
            primal_space=self.primal_space,
            dual_space=self.dual_space,
            C=C,
            M_primal=M_primal,
            M_dual=M_dual,
            Minv_primal=M_primal.invert(),
            Minv_dual=M_dual.invert(),
            unit_primal=unit_primal,
            unit_dual=unit_dual,
        )
        self._initialized = True
        logger.info("═══ DualCell System Ready ═══")
        return self

    def _require(self) -> dynamics.WaveOperators:
        if not self._initialized:
            raise RuntimeError("System not initialized. Call initialize() first.")
        return self.operators

    # ── Fields ──────────────────────────────────────────────────────────

    def interpolate_primal(self, f: Callable) -> FieldVector:
        self._require()
        return interpolate(self.primal_space, f)

    def interpolate_dual(self, f: Callable) -> FieldVector:
        self._require()
        return interpolate(self.dual_space, f)

    # ── Solvers ─────────────────────────────────────────────────────────

    def lambda_max(self) -> float:
        ops = self._require()
        if self._lambda_max is None:
            self._lambda_max = dynamics.estimate_lambda_max(ops.C, ops.Minv_dual, ops.Minv_primal)
        return self._lambda_max

    def stable_timestep(self, safety: Optional[float] = None) -> float:
        return dynamics.cfl_timestep(self.lambda_max(), safety)

    def start(self, s0: Callable, u0: Optional[Callable], dt: float,
              sources: Sequence[dynamics.SourceTerm] = ()) -> dynamics.FieldState:
        """Initial FieldState from callables (u0=None means a zero dual field)."""
        ops = self._require()
        s = interpolate(self.primal_space, s0).values
        u = interpolate(self.dual_space, u0).values if u0 is not None else np.zeros(ops.n_dual)
        return dynamics.initial_state(s, u, ops, dt, sources)

    def run(self, t_end: float, s0: Callable, u0: Optional[Callable] = None, dt: Optional[float] = None,
            sources: Sequence[dynamics.SourceTerm] = (),
            observers: Sequence[dynamics.Observer] = ()) -> dynamics.FieldState:
        """Integrate to t_end with Δt ≤ dt (default: the CFL step with the configured safety)."""
        dt_max = self.stable_timestep() if dt is None else dt
        n_steps, dt = dynamics.plan_steps(t_end, dt_max)
        state = self.start(s0, u0, dt, sources)
        logger.info(f"Dynamics: {n_steps} steps of Δt={dt:.4e} to t={t_end:g}")
        return dynamics.leapfrog_run(state, self.operators, n_steps, sources, observers)

    def spectrum(self, k: int) -> spectra.SpectrumResult:
        ops = self._require()
        pencil = spectra.assemble_pencil(ops.C, ops.Minv_dual, ops.M_primal)
        return spectra.solve_generalized(pencil.S, pencil.M, k, metadata=self.summary())

    # ── Reporting ───────────────────────────────────────────────────────

    def summary(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "system": self.system.value,
            "bc": self.bc.value,
            "P": self.degree,
            "h": self.triangulation.mesh_size,
            "triangles": self.triangulation.n_triangles,
        }
        if self._initialized:
            out.update({
                "primal_dofs": self.primal_space.total_dofs,
                "dual_dofs": self.dual_space.total_dofs,
                "nnz_C": int(self.operators.C.nnz),
            })
        return out

    def print_status(self) -> str:
        lines = [
            "",
            "╔══════════════════════════════════════════════════════════╗",
            "║           DualCell 2D — System Status                    ║",
            "╠══════════════════════════════════════════════════════════╣",
            f"║  Status: {'✔ READY' if self._initialized else '✘ NOT INITIALIZED'}",
            f"║  System: {self.system.value}   Boundary: {self.bc.value}   P={self.degree}",
            f"║  Mesh: {self.triangulation.n_vertices} vertices, {self.triangulation.n_triangles} triangles,"
            f" h={self.triangulation.mesh_size:.4g}",
        ]
        if self._initialized:
            ops = self.operators
            lines.append(f"║  Micro-cells: {self.mesh.n_cells}")
            lines.append(f"║  Primal DoFs: {ops.n_primal}  {self.primal_space.class_counts()}")
            lines.append(f"║  Dual DoFs:   {ops.n_dual}  {self.dual_space.class_counts()}")
            lines.append(f"║  Mass blocks: primal {ops.M_primal.block_histogram()}, dual {ops.M_dual.block_histogram()}")
            lines.append(f"║  Coupling: {ops.C.shape[0]}×{ops.C.shape[1]}, nnz={ops.C.nnz}")
            if self._lambda_max is not None:
                lines.append(f"║  λ_max={self._lambda_max:.6g}  Δt_CFL={dynamics.cfl_timestep(self._lambda_max, 1.0):.4e}")
        lines.append("╚══════════════════════════════════════════════════════════╝")
        report = "\n".join(lines)
        print(report)
        return report
