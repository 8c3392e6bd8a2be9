"""Max-min uplink rate optimization for pinching-antenna systems.

Modules:

* :mod:`pinchopt.channel` - geometry, coherent gains and rate formulas
* :mod:`pinchopt.conic` - second-order cone programs and their solver
* :mod:`pinchopt.placement` - SCA antenna placement with an epsilon sweep
* :mod:`pinchopt.allocation` - resource-fraction allocation
* :mod:`pinchopt.sim` / :mod:`pinchopt.cli` - Monte Carlo sweeps and CSV output
"""

from pinchopt._kernels import BACKEND
from pinchopt.allocation import (
    AllocationResult,
    allocate,
    closed_form_allocation,
    equal_allocation,
    gain_profile,
    lambert_w_minus1,
    maxmin_bisection,
)
from pinchopt.channel import (
    AntennaLayout,
    PhysicalParams,
    Scenario,
    conventional_gain,
    conventional_rate,
    effective_gain,
    fixed_layout,
    ideal_gain,
    pa_rate,
)
from pinchopt.conic import ConeProgram, SOCBlock, SolveOutcome, Status, solve
from pinchopt.placement import PlacementSolution, SCAConfig, epsilon_sweep, initial_layout, sca_optimize
from pinchopt.sim import SimConfig, draw_scenario, emit_csv, run_scheme, sweep

__version__ = "0.1.0"

__all__ = [
    "AllocationResult", "AntennaLayout", "BACKEND", "ConeProgram", "PhysicalParams", "PlacementSolution",
    "SCAConfig", "SOCBlock", "Scenario", "SimConfig", "SolveOutcome", "Status", "allocate",
    "closed_form_allocation", "conventional_gain", "conventional_rate", "draw_scenario", "effective_gain",
    "emit_csv", "epsilon_sweep", "equal_allocation", "fixed_layout", "gain_profile", "ideal_gain",
    "initial_layout", "lambert_w_minus1", "maxmin_bisection", "pa_rate", "run_scheme", "sca_optimize",
    "solve", "sweep",
]
