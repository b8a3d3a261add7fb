"""
DualCell 2D — Entry Point
─────────────────────────
Usage:
  python main.py                  → Small Maxwell demo run with status box
  python main.py --acoustic       → Same demo on the acoustic system
  python main.py <command> ...    → Experiment suite (same flags as `dualcell2d`)
"""
from __future__ import annotations
import sys
from tabulate import tabulate
from dualcell.layer1_interface import cli
from dualcell.layer2_solvers import dynamics
from dualcell.layer3_discretization.assembly import BoundaryMode, WaveSystem
from dualcell.layer4_geometry.mesh import generate_structured_square
from dualcell.logging_config import get_logger, set_correlation_id

logger = get_logger(__name__)


def run_demo(system_kind: WaveSystem = WaveSystem.MAXWELL) -> int:
    """Gaussian peak on the unit square up to t = 0.5 with an energy trace."""
    from dualcell.system import DualCellSystem

    set_correlation_id(f"demo-{system_kind.value}")
    system = DualCellSystem(generate_structured_square(8), 2, system_kind, BoundaryMode.ELECTRIC_WALL)
    system.initialize()
    energy = dynamics.EnergyObserver(stride=10)
    final = system.run(0.5, dynamics.gaussian_peak, observers=[energy])
    system.print_status()

    print("\n" + "=" * 70)
    print(f"  DualCell 2D — Demo: {system_kind.value}, {final.step} steps of Δt={final.dt:.3e}")
    print("=" * 70)
    frame = energy.frame()
    print(tabulate(frame.values.tolist(), headers=list(frame.columns), floatfmt=".10g"))
    drift = abs(frame["energy"].iloc[-1] - frame["energy"].iloc[0]) / frame["energy"].iloc[0]
    print(f"\n  Relative energy drift: {drift:.2e}")
    return 0


def main():
    args = sys.argv[1:]
    if not args or args == ["--acoustic"]:
        return run_demo(WaveSystem.ACOUSTIC if args else WaveSystem.MAXWELL)
    return cli.main(args)


if __name__ == "__main__":
    sys.exit(main())
