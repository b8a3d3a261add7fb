from __future__ import annotations
import json
import math
import time
import numpy as np
import pytest
from pydantic import ValidationError
from dualcell.errors import ExperimentError
from dualcell.layer1_interface import cli
from dualcell.layer1_interface.experiments import (
    ExperimentConfig, ExperimentReport, fit_rate, read_csv, run_experiment,
)
from dualcell.layer2_solvers import dynamics
from dualcell.layer2_solvers.dynamics import sin_mode
from dualcell.layer3_discretization.fe_spaces import Grid, SpaceKind, SpaceSpec, enumerate_dofs, interpolate, l2_error
from dualcell.layer4_geometry.mesh import build_micro_cells, generate_structured_square


def _config(tmp_path, **overrides) -> ExperimentConfig:
    return ExperimentConfig(out_dir=str(tmp_path / "out"), **overrides)


# ═══════════════════════════════════════════════════════════════════════
# CONFIG & FITS
# ═══════════════════════════════════════════════════════════════════════

def test_fit_rate():
    fit = fit_rate([1.0, 2.0, 4.0], [3.0, 12.0, 48.0])
    assert fit.slope == pytest.approx(2.0)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)
    assert fit.points == 3
    assert fit_rate([1.0], [1.0]) is None
    assert fit_rate([1.0, 2.0], [0.0, 1.0]) is None
    assert fit_rate([1.0, 2.0, 3.0], [1.0, math.nan, 9.0]).points == 2


@pytest.mark.parametrize("overrides", [
    {"command": "evp", "degrees": []},
    {"command": "evp", "degrees": [-1]},
    {"command": "cfl", "degrees": [1], "sizes": [0]},
    {"command": "cfl", "degrees": [1], "safety": 0.0},
    {"command": "td", "degrees": [1], "t_end": -0.5},
    {"command": "bogus", "degrees": [1]},
])
def test_invalid_configs(overrides):
    with pytest.raises(ValidationError):
        ExperimentConfig(**overrides)


def test_config_normalizes_lists_and_domain():
    config = ExperimentConfig(command="cfl", degrees=[2, 1, 2], sizes=[8, 4])
    assert config.degrees == [1, 2]
    assert config.sizes == [4, 8]
    assert config.domain_side == pytest.approx(math.pi)
    assert ExperimentConfig(command="sparsity", degrees=[1]).domain_side == 1.0
    assert ExperimentConfig(command="evp", degrees=[1], side=2.0).domain_side == 2.0


def test_report_passes_only_when_every_check_passes():
    report = ExperimentReport(command="cfl")
    assert report.passed
    report.check("a", True, 1.0)
    report.check("b", False, math.inf, "≤ 1")
    assert not report.passed
    assert report.checks[1].value is None
    text = cli.render_report(report)
    assert "FAILED" in text
    assert "✘" in text


def test_report_fails_when_a_case_aborted():
    report = ExperimentReport(command="evp")
    report.case_errors.append("n=2 P=1: dense cap exceeded")
    assert report.checks == []
    assert not report.passed


# ═══════════════════════════════════════════════════════════════════════
# COMMANDS
# ═══════════════════════════════════════════════════════════════════════

def test_cfl_single_case_has_no_fit(tmp_path):
    config = _config(tmp_path, command="cfl", degrees=[1], sizes=[2])
    report = run_experiment(config)
    assert report.passed
    assert report.checks == []
    cfl_path = tmp_path / "out" / "cfl.csv"
    first = cfl_path.read_text().splitlines()[0]
    assert first.startswith("# config: ")
    assert json.loads(first[len("# config: "):])["command"] == "cfl"
    table = read_csv(cfl_path)
    assert len(table) == 1
    assert bool(table["converged"].iloc[0])
    assert np.isfinite(table["t0"].iloc[0]) and table["t0"].iloc[0] > 0
    assert table["dt"].iloc[0] == pytest.approx(config.safety * table["t0"].iloc[0])
    assert read_csv(tmp_path / "out" / "cfl_fits.csv").empty


def test_cfl_sweep_reports_the_degree_band(tmp_path):
    report = run_experiment(_config(tmp_path, command="cfl", degrees=[1, 2], sizes=[2, 4]))
    names = [c.name for c in report.checks]
    assert "cfl t0·(P+1)² band n=2" in names
    table = read_csv(tmp_path / "out" / "cfl.csv")
    # finer meshes need smaller steps
    for _, grp in table.groupby("P"):
        assert grp.sort_values("h")["t0"].is_monotonic_increasing


def test_sparsity_on_the_fan(tmp_path):
    report = run_experiment(_config(tmp_path, command="sparsity", degrees=[0, 1, 2, 3]))
    assert report.passed, [c for c in report.checks if not c.passed]
    table = read_csv(tmp_path / "out" / "sparsity.csv")
    assert len(table) == 8
    scalar = table[table["space"] == "scalar"]
    assert (scalar["lumped_max"] == 1).all()
    vector = table[table["space"] == "vector"]
    assert (vector["consistent_inv_max"] >= vector["lumped_inv_max"]).all()


def test_evp_writes_its_tables(tmp_path):
    report = run_experiment(_config(tmp_path, command="evp", degrees=[1], sizes=[2, 4], eig_max=10.0, track=[2.0]))
    out = tmp_path / "out"
    assert {p.name for p in out.iterdir()} == {"evp_spectrum.csv", "evp_convergence.csv", "evp_fits.csv"}
    spectrum = read_csv(out / "evp_spectrum.csv")
    assert len(spectrum) == 2 * 6
    assert sorted(set(spectrum["target"])) == [2.0, 5.0, 8.0, 10.0]
    convergence = read_csv(out / "evp_convergence.csv")
    assert set(convergence["target"]) == {2.0}
    assert len(convergence) == 2
    assert any(c.name == "evp no spurious modes P=1" for c in report.checks)


def test_td_at_time_zero_is_the_interpolation_error(tmp_path):
    report = run_experiment(_config(tmp_path, command="td", degrees=[2], sizes=[4], t_end=0.0))
    assert report.passed
    table = read_csv(tmp_path / "out" / "td.csv")
    mesh = build_micro_cells(generate_structured_square(4, math.pi))
    primal = enumerate_dofs(SpaceSpec(kind=SpaceKind.GRAD, grid=Grid.PRIMAL, degree=2), mesh)
    expected = l2_error(interpolate(primal, sin_mode), sin_mode)
    assert table["l2_error"].iloc[0] == pytest.approx(expected, rel=1e-12)
    assert table["steps"].iloc[0] == 0


def test_td_requires_the_magnetic_wall(tmp_path):
    config = _config(tmp_path, command="td", degrees=[1], sizes=[2], bc="electric-wall")
    with pytest.raises(ExperimentError):
        run_experiment(config)


def test_throughput_marks_single_timings_as_noisy(tmp_path):
    report = run_experiment(_config(tmp_path, command="throughput", degrees=[1], sizes=[2, 3], repetitions=1, steps=3))
    out = tmp_path / "out"
    table = read_csv(out / "throughput.csv")
    assert table["noisy"].all()
    assert (table["totaldofs"] == table["scalardofs"] + table["vectorialdofs"]).all()
    stable = read_csv(out / "throughput_dofs.csv")
    assert "seconds" not in stable.columns and "dofspers" not in stable.columns
    assert {c.name for c in report.checks} == {"throughput DoFs/s constancy", "operator memory linear in DoFs"}


def test_throughput_timer_excludes_the_state_copy(tmp_path, monkeypatch):
    copy = dynamics.FieldState.copy

    def slow_copy(state):
        time.sleep(0.2)
        return copy(state)

    monkeypatch.setattr(dynamics.FieldState, "copy", slow_copy)
    run_experiment(_config(tmp_path, command="throughput", degrees=[1], sizes=[1], repetitions=1, steps=1))
    table = read_csv(tmp_path / "out" / "throughput.csv")
    assert table["seconds"].iloc[0] < 0.2


def test_demo_conserves_energy(tmp_path):
    report = run_experiment(_config(tmp_path, command="demo", degrees=[1], sizes=[2], t_end=0.2))
    assert report.passed
    series = read_csv(tmp_path / "out" / "demo_series.csv")
    assert list(series.columns) == ["step", "t", "energy", "probe0", "probe1"]


@pytest.mark.slow
def test_td_convergence_rate(tmp_path):
    report = run_experiment(_config(tmp_path, command="td", degrees=[2], sizes=[4, 8, 16], t_end=0.3))
    assert report.passed, [c for c in report.checks if not c.passed]


# ═══════════════════════════════════════════════════════════════════════
# CLI
# ═══════════════════════════════════════════════════════════════════════

def test_cli_exit_codes_and_reproducible_output(tmp_path, capsys):
    out = str(tmp_path / "cli")
    argv = ["cfl", "--bc", "magnetic-wall", "--degrees", "1", "--sizes", "2", "--out", out]
    assert cli.main(argv) == cli.EXIT_OK
    first = (tmp_path / "cli" / "cfl.csv").read_bytes()
    assert cli.main(argv) == cli.EXIT_OK
    assert (tmp_path / "cli" / "cfl.csv").read_bytes() == first
    assert "cfl: PASSED" in capsys.readouterr().out


def test_cli_usage_errors(tmp_path):
    assert cli.main(["cfl", "--bc", "magnetic-wall", "--degrees", "-1", "--out", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["td", "--bc", "electric-wall", "--degrees", "1", "--sizes", "2",
                     "--out", str(tmp_path)]) == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        cli.main(["nonsense"])
    assert info.value.code == 2


def test_cli_defaults():
    args = cli.build_parser().parse_args(["sparsity", "--bc", "electric-wall"])
    config = cli.config_from_args(args)
    assert config.degrees == list(range(18))
    assert config.bc.value == "electric-wall"


def test_cli_requires_the_boundary_mode(tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["cfl", "--degrees", "1", "--sizes", "2", "--out", str(tmp_path)])
    assert info.value.code == 2


def test_cli_fails_when_every_case_aborts(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DUALCELL_DENSE_CAP", "1")
    argv = ["evp", "--bc", "magnetic-wall", "--degrees", "1", "--sizes", "2", "--eig-max", "10",
            "--out", str(tmp_path / "cli")]
    assert cli.main(argv) == cli.EXIT_FAILED
    out = capsys.readouterr().out
    assert "evp: FAILED" in out
    assert "case error" in out
    assert read_csv(tmp_path / "cli" / "evp_spectrum.csv").empty
