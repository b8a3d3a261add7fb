"""Exception hierarchy shared by all layers."""
from __future__ import annotations
from typing import Any, Optional


class DualCellError(Exception):
    """Base class for every error raised by the library."""


class MeshParseError(DualCellError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MeshTopologyError(DualCellError):
    pass


class MeshQualityError(DualCellError):
    def __init__(self, message: str, triangle: int):
        super().__init__(f"triangle {triangle}: {message}")
        self.triangle = triangle


class GeometryError(DualCellError):
    pass


class QuadratureError(DualCellError):
    pass


class UnsupportedSpaceError(DualCellError):
    pass


class AssemblyError(DualCellError):
    pass


class SingularBlockError(DualCellError):
    pass


class NonConvergenceError(DualCellError):
    """Iterative estimate did not settle; the last iterate is kept for the caller."""

    def __init__(self, message: str, estimate: float, iterate: Optional[Any] = None):
        super().__init__(message)
        self.estimate = estimate
        self.iterate = iterate


class DivergenceError(DualCellError):
    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


class SpectrumError(DualCellError):
    pass


class ExperimentError(DualCellError):
    pass
