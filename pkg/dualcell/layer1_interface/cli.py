"""
Command line — `dualcell2d <evp|cfl|td|sparsity|throughput|demo> --bc <mode> ...`
───────────────────────────────────────────────────────────────────────────────────
Exit codes:
  0  every asserted band passed
  1  at least one check failed or a case aborted
  2  usage or configuration error
"""
from __future__ import annotations
import argparse
import sys
from typing import List, Optional
from pydantic import ValidationError
from tabulate import tabulate
from dualcell import __version__
from dualcell.config import get_settings
from dualcell.errors import DualCellError
from dualcell.layer1_interface.experiments import COMMANDS, ExperimentConfig, ExperimentReport, run_experiment
from dualcell.logging_config import get_logger, set_correlation_id

logger = get_logger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

DEFAULT_DEGREES = {
    "evp": [0, 1, 2],
    "cfl": [1, 2, 3],
    "td": [1, 2, 3],
    "sparsity": list(range(18)),
    "throughput": [1, 2, 3],
    "demo": [2],
}
DEFAULT_SIZES = {
    "evp": [4, 8, 16],
    "cfl": [4, 8, 16],
    "td": [4, 8, 16],
    "sparsity": [1],
    "throughput": [8, 16, 32],
    "demo": [8],
}


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="dualcell2d",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        description="Mass-lumped dual cell solver for 2D Maxwell (TM) and acoustic waves",
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="experiment to run")
    parser.add_argument("--degrees", type=int, nargs="+", default=None, help="polynomial degrees P")
    parser.add_argument("--sizes", type=int, nargs="+", default=None,
                        help="cells per side of the structured square meshes")
    parser.add_argument("--mesh", default=None, help="mesh file (replaces the generated sweep)")
    parser.add_argument("--side", type=float, default=None, help="side of the square domain")
    parser.add_argument("--bc", choices=["electric-wall", "magnetic-wall"], required=True,
                        help="boundary mode, chosen per experiment")
    parser.add_argument("--system", choices=["maxwell", "acoustic"], default="maxwell")
    parser.add_argument("--safety", type=float, default=settings.solver.safety_factor,
                        help="fraction of the CFL step")
    parser.add_argument("--tend", type=float, default=1.0, help="end time")
    parser.add_argument("--out", default=settings.output.results_dir, help="output directory")
    parser.add_argument("--eig-max", type=float, default=80.0, help="largest analytic eigenvalue matched")
    parser.add_argument("--repetitions", type=int, default=4, help="timing repetitions (throughput)")
    parser.add_argument("--steps", type=int, default=50, help="steps per repetition (throughput)")
    parser.add_argument("--parallel", action="store_true", help="run independent cases in worker processes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        command=args.command,
        degrees=args.degrees if args.degrees is not None else DEFAULT_DEGREES[args.command],
        sizes=args.sizes if args.sizes is not None else DEFAULT_SIZES[args.command],
        mesh_file=args.mesh,
        side=args.side,
        bc=args.bc,
        system=args.system,
        safety=args.safety,
        t_end=args.tend,
        out_dir=args.out,
        eig_max=args.eig_max,
        repetitions=args.repetitions,
        steps=args.steps,
        parallel=args.parallel,
    )


def render_report(report: ExperimentReport) -> str:
    rows = [[c.name, "✔" if c.passed else "✘", "" if c.value is None else f"{c.value:.4g}", c.band, c.detail]
            for c in report.checks]
    lines = [f"\n  {report.command}: {'PASSED' if report.passed else 'FAILED'}"]
    if rows:
        lines.append(tabulate(rows, headers=["check", "ok", "value", "band", "detail"], tablefmt="simple"))
    for err in report.case_errors:
        lines.append(f"  ✘ case error: {err}")
    for path in report.files:
        lines.append(f"  📄 {path}")
    return "\n".join(lines)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    set_correlation_id(args.command)
    try:
        config = config_from_args(args)
    except ValidationError as exc:
        for err in exc.errors():
            print(f"dualcell2d: error: {'.'.join(map(str, err['loc']))}: {err['msg']}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run_experiment(config)
    except DualCellError as exc:
        logger.error(f"Experiment {config.command} aborted: {exc}")
        print(f"dualcell2d: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(render_report(report))
    return EXIT_OK if report.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
