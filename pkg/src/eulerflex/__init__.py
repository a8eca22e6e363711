"""Density-based scheduling and decentralized execution for storage-like fleets.

The package couples a population-level scheduler, which plans the evolution
of a fleet's state density as a sparse linear program, with a device-level
execution layer, where each device inverts a broadcast drift command into its
own power setpoint. A device-trajectory benchmark LP and Monte-Carlo
evaluation close the loop.
"""

from .broadcast import BroadcastSignal, local_setpoint, recover_signal
from .density import DensityVector, truncated_normal_density, uniform_density
from .device_benchmark import assemble_device_lp, cost_gap, extract_device_solution
from .errors import (
    AssemblyError,
    ConfigError,
    ParameterError,
    SolverError,
    ValidationError,
)
from .grids import Grid
from .macro_lp import (
    MacroSolution,
    PowerModel,
    SparseLP,
    VariableBlocks,
    assemble_macro_lp,
    assembly_report,
    extract_solution,
)
from .micro_sim import (
    AgentEnsemble,
    SimMetrics,
    build_ensemble,
    euler_maruyama_step,
    sample_capacities,
    sample_initial_states,
    simulate,
    state_histogram,
    wasserstein1,
)
from .mps_io import read_mps, solve_reference, write_mps
from .operators import (
    CflDiagnostic,
    TripletMatrix,
    build_averaging,
    build_cdf,
    build_diffusion,
    build_divergence,
    verify_cfl,
)
from .populations import (
    GridScenario,
    LeakyDrift,
    PopulationSpec,
    ResourceKind,
    TclRawParams,
    battery_population,
    drift_bounds,
    intrinsic_drift,
    population_from_tcl,
)
from .solver_gate import SolveReport, solve, solve_arrays, validate_solution

__version__ = "0.1.0"
