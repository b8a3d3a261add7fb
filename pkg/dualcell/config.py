"""
DualCell Config — quadrature caps · geometry tolerances · solver defaults · output
"""
from __future__ import annotations
import os
from pathlib import Path
from typing import Optional
from pydantic import BaseModel, Field

PROJECT_ROOT = Path(__file__).resolve().parent.parent

LOGS_DIR = PROJECT_ROOT / "logs"


def _load_env_file():
    """Reload .env file into os.environ (called on every get_settings())."""
    env_file = PROJECT_ROOT / ".env"
    if env_file.exists():
        with open(env_file) as f:
            for line in f:
                line = line.strip()
                if line and not line.startswith("#") and "=" in line:
                    key, _, value = line.partition("=")
                    os.environ[key.strip()] = value.strip()


class QuadratureSettings(BaseModel):
    # Node computation above this degree is refused rather than degraded
    degree_cap: int = Field(default_factory=lambda: int(os.getenv("DUALCELL_DEGREE_CAP", "64")))
    newton_polish_steps: int = 1


class GeometrySettings(BaseModel):
    singular_jacobian_rtol: float = 1e-14
    inverse_map_tol: float = 1e-12
    inverse_map_max_iter: int = 25


class SolverSettings(BaseModel):
    safety_factor: float = Field(default_factory=lambda: float(os.getenv("DUALCELL_SAFETY", "0.95")))
    power_tol: float = 1e-10
    power_max_iters: int = 10_000
    power_seed: int = 0
    # Largest h-space dimension for the dense generalized eigensolver
    dense_cap: int = Field(default_factory=lambda: int(os.getenv("DUALCELL_DENSE_CAP", "20000")))
    blowup_factor: float = 1e6
    assembly_chunk: int = 4096


class OutputSettings(BaseModel):
    results_dir: str = Field(default_factory=lambda: os.getenv("DUALCELL_RESULTS_DIR", "results"))
    snapshot_density: int = 4
    logs_dir: str = str(LOGS_DIR)


class AppSettings(BaseModel):
    app_name: str = "dualcell2d"
    version: str = "1.0.0"
    quadrature: QuadratureSettings = Field(default_factory=QuadratureSettings)
    geometry: GeometrySettings = Field(default_factory=GeometrySettings)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)
    log_level: str = Field(default_factory=lambda: os.getenv("DUALCELL_LOG_LEVEL", "INFO"))


_settings: Optional[AppSettings] = None


def get_settings() -> AppSettings:
    """Get settings - re-reads .env so environment overrides apply between runs."""
    global _settings
    _load_env_file()
    _settings = AppSettings()
    return _settings


def reset_settings() -> AppSettings:
    """Force reload settings (picks up new .env values)."""
    global _settings
    _settings = None
    return get_settings()
