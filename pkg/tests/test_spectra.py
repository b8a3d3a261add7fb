from __future__ import annotations
import math
import numpy as np
import pytest
from scipy import sparse
from dualcell.errors import SpectrumError
from dualcell.layer2_solvers.spectra import (
    SpectrumResult, analytic_for_mode, analytic_square_spectrum, assemble_pencil, match_spectrum,
    solve_generalized, spectrum_rows,
)
from dualcell.layer3_discretization.assembly import BlockDiagonalMatrix, BoundaryMode, WaveSystem
from dualcell.layer4_geometry.mesh import generate_structured_square
from dualcell.system import DualCellSystem


def test_identity_pencil():
    result = solve_generalized(np.eye(4), np.eye(4), 3)
    np.testing.assert_allclose(result.eigenvalues, [1.0, 1.0, 1.0])
    assert result.max_residual() < 1e-13
    assert list(result.frame().columns) == ["index", "lambda", "residual"]


def test_diagonal_pencil_and_clipped_count():
    result = solve_generalized(np.diag([4.0, 1.0]), np.eye(2), 5, metadata={"case": "diag"})
    np.testing.assert_allclose(result.eigenvalues, [1.0, 4.0])
    assert result.count == 2
    assert result.metadata == {"case": "diag"}


def test_generalized_pencil_scales_with_mass():
    result = solve_generalized(np.diag([2.0, 6.0]), np.diag([2.0, 3.0]), 2)
    np.testing.assert_allclose(result.eigenvalues, [1.0, 2.0])


def test_invalid_requests():
    with pytest.raises(SpectrumError):
        solve_generalized(np.eye(2), np.eye(2), 0)
    with pytest.raises(SpectrumError):
        solve_generalized(np.eye(2), np.diag([1.0, -1.0]), 1)


def test_pencil_without_coupling_is_zero():
    C = sparse.csr_matrix((3, 2))
    pencil = assemble_pencil(C, BlockDiagonalMatrix.from_diagonal(np.ones(2)), BlockDiagonalMatrix.from_diagonal(np.ones(3)))
    result = solve_generalized(pencil.S, pencil.M, 3)
    np.testing.assert_allclose(result.eigenvalues, 0.0, atol=1e-15)


def test_dense_cap(monkeypatch):
    monkeypatch.setenv("DUALCELL_DENSE_CAP", "5")
    C = sparse.identity(6, format="csr")
    with pytest.raises(SpectrumError):
        assemble_pencil(C, BlockDiagonalMatrix.from_diagonal(np.ones(6)), BlockDiagonalMatrix.from_diagonal(np.ones(6)))


# ═══════════════════════════════════════════════════════════════════════
# ANALYTIC SPECTRA & MATCHING
# ═══════════════════════════════════════════════════════════════════════

def test_analytic_square_spectra():
    np.testing.assert_allclose(analytic_square_spectrum(10), [2, 5, 5, 8, 10, 10])
    np.testing.assert_allclose(analytic_square_spectrum(4, boundary="neumann"), [0, 1, 1, 2, 4, 4])
    np.testing.assert_allclose(analytic_square_spectrum(25, side=1.0), [2 * math.pi ** 2])
    with pytest.raises(ValueError):
        analytic_square_spectrum(10, boundary="robin")


def test_boundary_mode_selects_the_analytic_family():
    assert analytic_for_mode(BoundaryMode.MAGNETIC_WALL) == "dirichlet"
    assert analytic_for_mode("electric-wall") == "neumann"


def test_matching_excludes_near_zero_modes():
    result = SpectrumResult(np.array([1e-12, 0.99, 1.01, 2.02]), np.zeros(4))
    match = match_spectrum(result, analytic_square_spectrum(2, boundary="neumann"))
    assert match.excluded == 1
    assert match.table["index"].tolist() == [1, 2, 3]
    np.testing.assert_allclose(match.errors, 0.01, rtol=1e-9)

    rows = spectrum_rows(match, 0.5, 2, BoundaryMode.ELECTRIC_WALL)
    assert list(rows.columns) == ["h", "P", "bc", "index", "lambda", "target", "rel_error"]
    assert set(rows["bc"]) == {"electric-wall"}


def test_matching_uses_each_eigenvalue_once():
    result = SpectrumResult(np.array([2.0, 5.0, 5.1, 8.0]), np.zeros(4))
    match = match_spectrum(result, [2, 5, 5])
    assert sorted(match.table["index"].tolist()) == [0, 1, 2]


def test_matching_needs_enough_eigenvalues():
    with pytest.raises(SpectrumError):
        match_spectrum(SpectrumResult(np.array([1.0]), np.zeros(1)), [1.0, 2.0])
    assert match_spectrum(SpectrumResult(np.array([1.0]), np.zeros(1)), []).table.empty


# ═══════════════════════════════════════════════════════════════════════
# DISCRETE SPECTRA
# ═══════════════════════════════════════════════════════════════════════

def test_electric_wall_keeps_one_constant_mode():
    sy = DualCellSystem(generate_structured_square(4, math.pi), 2, bc=BoundaryMode.ELECTRIC_WALL).initialize()
    result = sy.spectrum(4)
    assert abs(result.eigenvalues[0]) < 1e-9
    assert result.eigenvalues[1] == pytest.approx(1.0, rel=5e-2)
    assert result.eigenvalues[2] == pytest.approx(1.0, rel=5e-2)
    assert result.metadata["bc"] == "electric-wall"


@pytest.mark.parametrize("bc", [BoundaryMode.ELECTRIC_WALL, BoundaryMode.MAGNETIC_WALL])
def test_acoustic_and_maxwell_pencils_coincide(jittered, bc):
    pencils = []
    for system in (WaveSystem.MAXWELL, WaveSystem.ACOUSTIC):
        ops = DualCellSystem(jittered, 1, system, bc).initialize().operators
        pencils.append(assemble_pencil(ops.C, ops.Minv_dual, ops.M_primal))
    np.testing.assert_allclose(pencils[0].S, pencils[1].S, atol=1e-10)
    np.testing.assert_allclose(pencils[0].M, pencils[1].M, atol=1e-14)


@pytest.mark.slow
def test_magnetic_wall_spectrum_on_the_square():
    sy = DualCellSystem(generate_structured_square(8, math.pi), 2, bc=BoundaryMode.MAGNETIC_WALL).initialize()
    result = sy.spectrum(6)
    np.testing.assert_allclose(result.eigenvalues, [2, 5, 5, 8, 10, 10], rtol=2e-2)
    match = match_spectrum(result, analytic_square_spectrum(10))
    assert match.excluded == 0
    assert np.all(match.errors < 2e-2)
