"""Two-temperature homogenization lab.

Simulates heat conduction in a background material holding many small, highly conducting
inclusions, in three forms that converge into one another:

    finite conductivity      inclusions conduct sigma / eta
    infinite conductivity    each inclusion is one isothermal super-node (eta -> 0)
    homogenized              background temperature T coupled to the density-weighted
                             inclusion temperature vartheta (epsilon -> 0)

Basic Usage:
    from twotemp import ExperimentConfig, run_ode_check

    report = run_ode_check(ExperimentConfig())
    print(report.passed, report.fitted_rate["max_rel_error"])

Command line:
    twotemp sweep-eta --out results/
"""

__version__ = "0.1.0"

from .config import (
    DEFAULTS,
    ExperimentConfig,
    apply_preset,
    config_hash,
    configure_from_env,
    load_config,
)
from .context import get_current_span, run_span
from .errors import (
    ConfigError,
    GridMismatch,
    IncommensurateSpacing,
    InvalidEpsilon,
    InvariantViolation,
    NoConvergence,
    NonpositiveCoefficient,
    PackingInfeasible,
    TwoTempError,
    UnresolvedInclusion,
)
from .geometry import check_admissibility, place_inclusions, uniform_density
from .discretization import assemble_heat_operator, build_grid, classify_cells
from .model_finite import init_finite, step_finite
from .model_infinite import build_reduced_system, init_infinite, step_infinite
from .model_homogenized import init_hom, ode_reduction, step_hom
from .harness import (
    SimulationResult,
    run_corrector_table,
    run_epsilon_sweep,
    run_eta_sweep,
    run_geometry_validation,
    run_ode_check,
    run_simulation,
)
from .models import Domain, InclusionSet, MaterialParams, SweepReport

__all__ = [
    "ExperimentConfig",
    "DEFAULTS",
    "load_config",
    "apply_preset",
    "configure_from_env",
    "config_hash",
    "run_span",
    "get_current_span",
    "Domain",
    "InclusionSet",
    "MaterialParams",
    "SweepReport",
    "SimulationResult",
    "place_inclusions",
    "check_admissibility",
    "uniform_density",
    "build_grid",
    "classify_cells",
    "assemble_heat_operator",
    "init_finite",
    "step_finite",
    "build_reduced_system",
    "init_infinite",
    "step_infinite",
    "init_hom",
    "step_hom",
    "ode_reduction",
    "run_simulation",
    "run_eta_sweep",
    "run_epsilon_sweep",
    "run_ode_check",
    "run_corrector_table",
    "run_geometry_validation",
    "TwoTempError",
    "ConfigError",
    "GridMismatch",
    "IncommensurateSpacing",
    "InvalidEpsilon",
    "InvariantViolation",
    "NoConvergence",
    "NonpositiveCoefficient",
    "PackingInfeasible",
    "UnresolvedInclusion",
    "__version__",
]
