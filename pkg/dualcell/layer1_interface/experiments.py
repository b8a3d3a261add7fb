"""
Experiment Suite — reproducible sweeps over mesh size and degree
────────────────────────────────────────────────────────────────
Commands:
  - evp:        discrete spectra on [0, π]² matched to n² + k²
  - cfl:        maximal stable step t₀ = 2/√λ_max per (h, P)
  - td:         sin-mode time-domain L² convergence
  - sparsity:   nnz per row of lumped / consistent masses and inverses
  - throughput: DoFs per second of the leapfrog loop
  - demo:       one small run with an energy trace

Every command writes pandas CSVs prefixed by a `# config: {...}` line and
returns an ExperimentReport whose checks decide the process exit code.
"""
from __future__ import annotations
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.sparse import csgraph
from dualcell.config import get_settings
from dualcell.errors import DualCellError, ExperimentError, NonConvergenceError
from dualcell.layer2_solvers import dynamics, spectra
from dualcell.layer3_discretization.assembly import (
    BoundaryMode, MaterialField, WaveSystem, consistent_mass, lumped_mass,
)
from dualcell.layer3_discretization.fe_spaces import (
    FieldVector, Grid, SpaceKind, SpaceSpec, enumerate_dofs, l2_error,
)
from dualcell.layer4_geometry.mesh import (
    Triangulation, build_micro_cells, generate_fan_square, generate_structured_square, load_triangulation,
)
from dualcell.logging_config import get_logger, set_correlation_id
from dualcell.system import DualCellSystem

logger = get_logger(__name__)

Command = Literal["evp", "cfl", "td", "sparsity", "throughput", "demo"]

# Bands are 80% of the nominal order
RATE_BAND = 0.8
# Errors below this are roundoff and say nothing about a rate
ERROR_FLOOR = 1e-11


# ═══════════════════════════════════════════════════════════════════════
# CONFIGURATION & REPORTS
# ═══════════════════════════════════════════════════════════════════════

class ExperimentConfig(BaseModel):
    """Everything a run depends on; serialized into every CSV it writes."""
    model_config = ConfigDict(frozen=True)

    command: Command
    degrees: List[int]
    sizes: List[int] = Field(default_factory=lambda: [4, 8, 16])
    mesh_file: Optional[str] = None
    side: Optional[float] = None
    bc: BoundaryMode = BoundaryMode.MAGNETIC_WALL
    system: WaveSystem = WaveSystem.MAXWELL
    safety: float = Field(default_factory=lambda: get_settings().solver.safety_factor, gt=0, le=1)
    t_end: float = 1.0
    out_dir: str = Field(default_factory=lambda: get_settings().output.results_dir)
    eig_max: float = 80.0
    track: List[float] = Field(default_factory=lambda: [2.0, 73.0])
    repetitions: int = Field(default=4, ge=1)
    steps: int = Field(default=50, ge=1)
    max_halvings: int = Field(default=3, ge=0)
    parallel: bool = False
    deterministic: bool = True

    @field_validator("degrees")
    @classmethod
    def _degrees(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("degree list must not be empty")
        if any(p < 0 for p in v):
            raise ValueError("degrees must be non-negative")
        return sorted(set(v))

    @field_validator("sizes")
    @classmethod
    def _sizes(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("mesh-size list must not be empty")
        if any(n < 1 for n in v):
            raise ValueError("mesh sizes must be ≥ 1")
        return sorted(set(v))

    @model_validator(mode="after")
    def _end_time(self) -> "ExperimentConfig":
        if self.command in ("td", "demo") and self.t_end < 0:
            raise ValueError("end time must be ≥ 0")
        return self

    @property
    def domain_side(self) -> float:
        if self.side is not None:
            return self.side
        return 1.0 if self.command in ("sparsity", "throughput", "demo") else math.pi


class CheckResult(BaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    band: str = ""
    detail: str = ""


class ExperimentReport(BaseModel):
    command: str
    checks: List[CheckResult] = Field(default_factory=list)
    files: List[str] = Field(default_factory=list)
    case_errors: List[str] = Field(default_factory=list)
    finished_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))

    @property
    def passed(self) -> bool:
        """Every check passed and no case aborted before its checks could run."""
        return not self.case_errors and all(c.passed for c in self.checks)

    def check(self, name: str, passed: bool, value: Optional[float] = None, band: str = "", detail: str = ""):
        value = None if value is None or not math.isfinite(value) else float(value)
        self.checks.append(CheckResult(name=name, passed=bool(passed), value=value, band=band, detail=detail))
        level = logger.info if passed else logger.warning
        level(f"Check {'PASS' if passed else 'FAIL'}: {name} value={value} band={band} {detail}".rstrip())


class RateFit(BaseModel):
    slope: float
    intercept: float
    residual: float
    points: int


def fit_rate(x: Sequence[float], y: Sequence[float]) -> Optional[RateFit]:
    """Least-squares slope of log y against log x; None with fewer than two usable points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if np.count_nonzero(ok) < 2:
        return None
    lx, ly = np.log(x[ok]), np.log(y[ok])
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return RateFit(slope=float(slope), intercept=float(intercept), residual=residual, points=int(np.count_nonzero(ok)))


def write_csv(frame: pd.DataFrame, path: Path, config: ExperimentConfig) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# config: {header}\n")
        frame.to_csv(f, index=False)
    logger.info(f"Experiments: wrote {len(frame)} rows to {path}")
    return path


def read_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def _mesh_for(config: ExperimentConfig, n: int) -> Triangulation:
    if config.mesh_file:
        with open(config.mesh_file, encoding="utf-8") as f:
            return load_triangulation(f)
    return generate_structured_square(n, config.domain_side)


def _run_cases(func: Callable, config: ExperimentConfig, cases: Sequence[Tuple[int, int]]) -> List[Dict[str, Any]]:
    """Run independent (n, P) cases, in worker processes when the config asks for it."""
    if config.parallel and len(cases) > 1:
        with ProcessPoolExecutor() as pool:
            return list(pool.map(func, [config] * len(cases), [c[0] for c in cases], [c[1] for c in cases]))
    return [func(config, n, P) for n, P in cases]


def _cases(config: ExperimentConfig) -> List[Tuple[int, int]]:
    sizes = [0] if config.mesh_file else config.sizes
    return [(n, P) for P in config.degrees for n in sizes]


def _system(config: ExperimentConfig, n: int, P: int, bc: Optional[BoundaryMode] = None) -> DualCellSystem:
    return DualCellSystem(_mesh_for(config, n), P, config.system, bc or config.bc).initialize()


# ═══════════════════════════════════════════════════════════════════════
# EIGENVALUES
# ═══════════════════════════════════════════════════════════════════════

def _evp_case(config: ExperimentConfig, n: int, P: int) -> Dict[str, Any]:
    set_correlation_id(f"evp-n{n}-P{P}")
    out: Dict[str, Any] = {"n": n, "P": P, "rows": [], "error": None}
    try:
        system = _system(config, n, P)
        boundary = spectra.analytic_for_mode(config.bc)
        targets = spectra.analytic_square_spectrum(config.eig_max, config.domain_side, boundary)
        beyond = spectra.analytic_square_spectrum(2 * config.eig_max + 10, config.domain_side, boundary)
        next_value = float(beyond[len(targets)]) if len(beyond) > len(targets) else 2 * config.eig_max
        zeros = int(np.count_nonzero(targets <= 0))
        result = system.spectrum(len(targets) + zeros + 8)
        match = spectra.match_spectrum(result, targets)
        h = system.triangulation.mesh_size
        rows = spectra.spectrum_rows(match, h, P, config.bc)
        rows["dofs"] = system.primal_space.total_dofs
        cut = 0.5 * (float(targets[-1]) + next_value)
        kept = result.eigenvalues[result.eigenvalues >= spectra.NEAR_ZERO_RTOL * float(targets[targets > 0][0])]
        out.update(
            rows=rows.to_dict("records"),
            h=h,
            excluded=match.excluded,
            below_cut=int(np.count_nonzero(kept < cut)),
            expected_below_cut=int(np.count_nonzero(targets > 0)),
            max_residual=result.max_residual(),
        )
    except DualCellError as exc:
        logger.error(f"Experiments: evp case n={n} P={P} failed: {exc}")
        out["error"] = f"n={n} P={P}: {exc}"
    return out


def cmd_evp(config: ExperimentConfig) -> ExperimentReport:
    report = ExperimentReport(command="evp")
    out = Path(config.out_dir)
    results = _run_cases(_evp_case, config, _cases(config))
    rows = [r for res in results for r in res["rows"]]
    report.case_errors = [res["error"] for res in results if res["error"]]
    columns = ["h", "P", "bc", "index", "lambda", "target", "rel_error", "dofs"]
    spectrum = pd.DataFrame(rows, columns=columns)
    report.files.append(str(write_csv(spectrum, out / "evp_spectrum.csv", config)))

    tracked = [t for t in config.track if t <= config.eig_max]
    conv_columns = ["h", "P", "bc", "dofs", "target", "lambda", "rel_error"]
    selected = spectrum[spectrum["target"].isin(tracked)]
    if selected.empty:
        conv = pd.DataFrame(columns=conv_columns)
    else:
        conv = (selected.groupby(["P", "h", "target"], as_index=False)
                .agg(dofs=("dofs", "first"), bc=("bc", "first"), **{"lambda": ("lambda", "first")},
                     rel_error=("rel_error", "first")))
    conv = conv[conv_columns].sort_values(["P", "target", "h"])
    report.files.append(str(write_csv(conv.reset_index(drop=True), out / "evp_convergence.csv", config)))

    fits = []
    for (P, target), grp in conv.groupby(["P", "target"]):
        usable = grp[grp["rel_error"] > ERROR_FLOOR]
        fit = fit_rate(usable["h"], usable["rel_error"])
        if fit is None:
            continue
        fits.append({"P": P, "target": target, "slope": fit.slope, "residual": fit.residual, "points": fit.points})
        expected = 2 * P if P >= 1 else 2
        if fit.points >= 3:
            report.check(f"evp rate P={P} λ={target:g}", fit.slope >= RATE_BAND * expected, fit.slope,
                         f"≥ {RATE_BAND * expected:g}", f"residual={fit.residual:.3g}")
        errors = grp.sort_values("h", ascending=False)["rel_error"].to_numpy()
        if len(errors) >= 2 and target == tracked[0] and np.all(errors > ERROR_FLOOR):
            report.check(f"evp monotone P={P} λ={target:g}", bool(np.all(np.diff(errors) < 0)))
    report.files.append(str(write_csv(pd.DataFrame(fits, columns=["P", "target", "slope", "residual", "points"]),
                                      out / "evp_fits.csv", config)))

    for P in config.degrees:
        done = [res for res in results if res["P"] == P and res["error"] is None]
        if not done:
            continue
        finest = min(done, key=lambda res: res["h"])
        report.check(f"evp no spurious modes P={P}", finest["below_cut"] == finest["expected_below_cut"],
                     finest["below_cut"], f"= {finest['expected_below_cut']}",
                     f"excluded near-zero modes={finest['excluded']}")
    return report


# ═══════════════════════════════════════════════════════════════════════
# CFL
# ═══════════════════════════════════════════════════════════════════════

def _cfl_case(config: ExperimentConfig, n: int, P: int) -> Dict[str, Any]:
    set_correlation_id(f"cfl-n{n}-P{P}")
    row: Dict[str, Any] = {"n": n, "P": P, "h": math.nan, "dofs": 0, "lambda_max": math.nan,
                           "t0": math.nan, "t0_scaled": math.nan, "dt": math.nan, "converged": False, "error": ""}
    try:
        system = _system(config, n, P)
        row.update(h=system.triangulation.mesh_size, dofs=system.primal_space.total_dofs)
        try:
            lam = system.lambda_max()
            row["converged"] = True
        except NonConvergenceError as exc:
            lam = exc.estimate
            row["error"] = str(exc)
        t0 = dynamics.cfl_timestep(lam, 1.0)
        row.update(lambda_max=lam, t0=t0, t0_scaled=t0 * (P + 1) ** 2, dt=config.safety * t0)
    except DualCellError as exc:
        logger.error(f"Experiments: cfl case n={n} P={P} failed: {exc}")
        row["error"] = str(exc)
    return row


def cmd_cfl(config: ExperimentConfig) -> ExperimentReport:
    report = ExperimentReport(command="cfl")
    out = Path(config.out_dir)
    table = pd.DataFrame(_run_cases(_cfl_case, config, _cases(config)))
    report.case_errors = [f"n={r.n} P={r.P}: {r.error}" for r in table.itertuples() if r.error]
    report.files.append(str(write_csv(table, out / "cfl.csv", config)))

    fits = []
    for P, grp in table.groupby("P"):
        fit = fit_rate(grp["h"], grp["t0"])
        if fit is None:
            continue
        fits.append({"quantity": "t0_vs_h", "P": P, "slope": fit.slope, "residual": fit.residual, "points": fit.points})
        if fit.points >= 3:
            report.check(f"cfl slope P={P}", abs(fit.slope - 1.0) <= 0.25, fit.slope, "1 ± 0.25",
                         f"residual={fit.residual:.3g}")
    for n, grp in table.groupby("n"):
        grp = grp[(grp["P"] >= 1) & np.isfinite(grp["t0_scaled"])]
        if len(grp) >= 2:
            spread = float(grp["t0_scaled"].max() / grp["t0_scaled"].min())
            report.check(f"cfl t0·(P+1)² band n={n}", spread <= 2.0, spread, "≤ ×2")
            fit = fit_rate(grp["P"] + 1, grp["t0"])
            if fit is not None:
                fits.append({"quantity": "t0_vs_P+1", "P": -1, "slope": fit.slope, "residual": fit.residual,
                             "points": fit.points})
    report.files.append(str(write_csv(pd.DataFrame(fits, columns=["quantity", "P", "slope", "residual", "points"]),
                                      out / "cfl_fits.csv", config)))
    return report


# ═══════════════════════════════════════════════════════════════════════
# TIME DOMAIN
# ═══════════════════════════════════════════════════════════════════════

def _sin_mode_error(system: DualCellSystem, t_end: float, dt_max: float) -> Tuple[float, float, int]:
    ops = system.operators
    n_steps, dt = dynamics.plan_steps(t_end, dt_max)
    state = system.start(dynamics.sin_mode, None, dt)
    state = dynamics.leapfrog_run(state, ops, n_steps)
    s = dynamics.synchronized_primal(state, ops)
    return l2_error(FieldVector(ops.primal_space, s), dynamics.sin_mode_exact(state.t)), dt, n_steps


def _td_case(config: ExperimentConfig, n: int, P: int) -> Dict[str, Any]:
    set_correlation_id(f"td-n{n}-P{P}")
    row: Dict[str, Any] = {"n": n, "P": P, "h": math.nan, "dofs": 0, "dt": math.nan, "steps": 0,
                           "l2_error": math.nan, "halving_change": math.nan, "error": ""}
    try:
        system = _system(config, n, P, BoundaryMode.MAGNETIC_WALL)
        row.update(h=system.triangulation.mesh_size, dofs=system.primal_space.total_dofs)
        dt = system.stable_timestep(config.safety)
        err, dt_used, steps = _sin_mode_error(system, config.t_end, dt)
        change = 0.0
        for _ in range(config.max_halvings if config.t_end > 0 else 0):
            finer, dt_half, steps_half = _sin_mode_error(system, config.t_end, dt_used / 2)
            change = abs(err - finer) / max(finer, 1e-300)
            if change < 0.05:
                break
            err, dt_used, steps = finer, dt_half, steps_half
        row.update(dt=dt_used, steps=steps, l2_error=err, halving_change=change)
    except DualCellError as exc:
        logger.error(f"Experiments: td case n={n} P={P} failed: {exc}")
        row["error"] = str(exc)
    return row


def cmd_td_convergence(config: ExperimentConfig) -> ExperimentReport:
    if config.bc != BoundaryMode.MAGNETIC_WALL:
        raise ExperimentError("the sin-mode reference vanishes on the boundary: use --bc magnetic-wall")
    report = ExperimentReport(command="td")
    out = Path(config.out_dir)
    table = pd.DataFrame(_run_cases(_td_case, config, _cases(config)))
    report.case_errors = [f"n={r.n} P={r.P}: {r.error}" for r in table.itertuples() if r.error]
    report.files.append(str(write_csv(table, out / "td.csv", config)))

    fits = []
    for P, grp in table.groupby("P"):
        fit = fit_rate(grp["h"], grp["l2_error"])
        if fit is not None:
            fits.append({"P": P, "slope": fit.slope, "residual": fit.residual, "points": fit.points})
            if P >= 1 and fit.points >= 3:
                report.check(f"td rate P={P}", fit.slope >= RATE_BAND * P, fit.slope, f"≥ {RATE_BAND * P:g}",
                             f"residual={fit.residual:.3g}")
        finest = grp.loc[grp["h"].idxmin()] if grp["h"].notna().any() else None
        if finest is not None and config.t_end > 0 and config.max_halvings > 0 and not finest["error"]:
            report.check(f"td Δt-halving P={P}", finest["halving_change"] < 0.05, finest["halving_change"], "< 5%")
    report.files.append(str(write_csv(pd.DataFrame(fits, columns=["P", "slope", "residual", "points"]),
                                      out / "td_fits.csv", config)))
    return report


# ═══════════════════════════════════════════════════════════════════════
# SPARSITY
# ═══════════════════════════════════════════════════════════════════════

def _nnz_per_row(A) -> np.ndarray:
    A = A.tocsr()
    A.eliminate_zeros()
    return np.diff(A.indptr)


def _component_sizes(A) -> np.ndarray:
    """Per-row size of the connected block containing it: the nnz of that row of A⁻¹."""
    _, labels = csgraph.connected_components(A, directed=False)
    return np.bincount(labels)[labels]


def _sparsity_case(config: ExperimentConfig, n: int, P: int) -> List[Dict[str, Any]]:
    set_correlation_id(f"sparsity-P{P}")
    tri = (_mesh_for(config, n) if config.mesh_file else generate_fan_square(config.domain_side))
    mesh = build_micro_cells(tri)
    material = (MaterialField.maxwell(tri) if config.system == WaveSystem.MAXWELL else MaterialField.acoustic(tri))
    dual_kind = SpaceKind.CURL if config.system == WaveSystem.MAXWELL else SpaceKind.DIV
    rows = []
    for label, spec in (("scalar", SpaceSpec(kind=SpaceKind.GRAD, grid=Grid.PRIMAL, degree=P)),
                        ("vector", SpaceSpec(kind=dual_kind, grid=Grid.DUAL, degree=P))):
        dofmap = enumerate_dofs(spec, mesh)
        M = lumped_mass(dofmap, material)
        lumped = M.nnz_per_row()
        lumped_inv = M.invert().nnz_per_row()
        consistent = consistent_mass(dofmap, material)
        cons = _nnz_per_row(consistent)
        cons_inv = _component_sizes(consistent)
        rows.append({
            "P": P, "space": label, "dofs": dofmap.total_dofs,
            "lumped_max": int(lumped.max()), "lumped_mean": float(lumped.mean()),
            "lumped_inv_max": int(lumped_inv.max()), "lumped_inv_mean": float(lumped_inv.mean()),
            "consistent_max": int(cons.max()), "consistent_mean": float(cons.mean()),
            "consistent_inv_max": int(cons_inv.max()), "consistent_inv_mean": float(cons_inv.mean()),
        })
    return rows


def cmd_sparsity(config: ExperimentConfig) -> ExperimentReport:
    report = ExperimentReport(command="sparsity")
    results = _run_cases(_sparsity_case, config, [(0, P) for P in config.degrees])
    table = pd.DataFrame([r for rows in results for r in rows])
    report.files.append(str(write_csv(table, Path(config.out_dir) / "sparsity.csv", config)))

    scalar = table[table["space"] == "scalar"]
    vector = table[table["space"] == "vector"].sort_values("P")
    report.check("lumped scalar inverse is diagonal", bool((scalar["lumped_inv_max"] == 1).all()),
                 float(scalar["lumped_inv_max"].max()), "= 1")
    positive = vector[vector["P"] >= 1]
    if len(positive) >= 2:
        widths = positive["lumped_inv_max"].to_numpy()
        report.check("lumped vector inverse width independent of P", bool(np.all(widths == widths[0])),
                     float(widths.max()), f"= {int(widths[0])}")
        growth = positive["consistent_inv_max"].to_numpy()
        report.check("consistent vector inverse grows with P", bool(np.all(np.diff(growth) > 0)),
                     float(growth[-1]), "strictly increasing")
    return report


# ═══════════════════════════════════════════════════════════════════════
# THROUGHPUT
# ═══════════════════════════════════════════════════════════════════════

def _operator_bytes(ops: dynamics.WaveOperators) -> int:
    total = ops.C.data.nbytes + ops.C.indices.nbytes + ops.C.indptr.nbytes
    for M in (ops.Minv_primal, ops.Minv_dual):
        total += sum(idx.nbytes + blocks.nbytes for idx, blocks in M.groups.values())
    return int(total)


def _throughput_case(config: ExperimentConfig, n: int, P: int) -> Dict[str, Any]:
    set_correlation_id(f"throughput-n{n}-P{P}")
    system = _system(config, n, P)
    ops = system.operators
    dt = system.stable_timestep(config.safety)
    state = system.start(dynamics.gaussian_peak, None, dt)
    best = math.inf
    for _ in range(config.repetitions):
        run = state.copy()
        start = time.perf_counter()
        for _ in range(config.steps):
            dynamics.leapfrog_step(run, ops)
        best = min(best, time.perf_counter() - start)
    total = ops.n_primal + ops.n_dual
    return {
        "maxh": system.triangulation.mesh_size,
        "order": P,
        "tau": dt,
        "scalardofs": ops.n_primal,
        "vectorialdofs": ops.n_dual,
        "totaldofs": total,
        "dofspers": total * config.steps / best if best > 0 else math.inf,
        "seconds": best,
        "bytes_per_dof": _operator_bytes(ops) / total,
        "noisy": config.repetitions == 1,
    }


def cmd_throughput(config: ExperimentConfig) -> ExperimentReport:
    report = ExperimentReport(command="throughput")
    table = pd.DataFrame(_run_cases(_throughput_case, config, _cases(config)))
    if config.deterministic:
        # Timings are machine noise; keep them out of the reproducible file
        stable = table.drop(columns=["dofspers", "seconds"])
        report.files.append(str(write_csv(stable, Path(config.out_dir) / "throughput_dofs.csv", config)))
    report.files.append(str(write_csv(table, Path(config.out_dir) / "throughput.csv", config)))
    if len(table) >= 2:
        spread = float(table["dofspers"].max() / table["dofspers"].min())
        report.check("throughput DoFs/s constancy", spread < 4.0, spread, "< ×4",
                     "single timing, noisy" if config.repetitions == 1 else "")
        mem = float(table["bytes_per_dof"].max() / table["bytes_per_dof"].min())
        report.check("operator memory linear in DoFs", mem < 4.0, mem, "< ×4")
    return report


# ═══════════════════════════════════════════════════════════════════════
# DEMO
# ═══════════════════════════════════════════════════════════════════════

def demo(config: ExperimentConfig) -> ExperimentReport:
    """One Gaussian-peak run with energy and centre-probe traces."""
    report = ExperimentReport(command="demo")
    n, P = config.sizes[0], config.degrees[0]
    set_correlation_id(f"demo-n{n}-P{P}")
    system = _system(config, n, P)
    system.print_status()
    side = config.domain_side
    energy = dynamics.EnergyObserver(stride=1)
    probes = dynamics.ProbeObserver([(0.5 * side, 0.5 * side), (0.25 * side, 0.5 * side)], stride=1)
    peak = lambda x, y: dynamics.gaussian_peak(x, y, width=50.0 / side, centre=(0.5 * side, 0.5 * side))
    system.run(config.t_end, peak, observers=[energy, probes])
    series = dynamics.time_series(energy, probes)
    report.files.append(str(write_csv(series, Path(config.out_dir) / "demo_series.csv", config)))
    e = series["energy"].to_numpy()
    drift = float(np.max(np.abs(e - e[0])) / e[0]) if len(e) and e[0] > 0 else 0.0
    report.check("demo energy drift", drift < 1e-8, drift, "< 1e-8")
    return report


COMMANDS: Dict[str, Callable[[ExperimentConfig], ExperimentReport]] = {
    "evp": cmd_evp,
    "cfl": cmd_cfl,
    "td": cmd_td_convergence,
    "sparsity": cmd_sparsity,
    "throughput": cmd_throughput,
    "demo": demo,
}


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    logger.info(f"═══ Experiment {config.command} degrees={config.degrees} sizes={config.sizes} ═══")
    report = COMMANDS[config.command](config)
    logger.info(f"═══ Experiment {config.command} {'PASSED' if report.passed else 'FAILED'} ═══")
    return report
