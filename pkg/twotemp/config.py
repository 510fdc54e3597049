"""Configuration management for twotemp experiments."""

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from .errors import ConfigError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# Named initial-data profiles and center densities understood by the harness
INITIAL_PROFILES = ("constant", "cosine", "gaussian", "linear")
DENSITIES = ("uniform", "linear")
MODELS = ("finite", "infinite", "homogenized")

# Keys that change how a run executes but never what it computes
RUNTIME_KEYS = ("threads",)


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment configuration settings.

    Every physical default is listed here and printed by ``twotemp --print-defaults``.

    Args:
        schema_version: Config file schema version (must be 1)
        domain_lower: Lower corner of the box domain
        domain_upper: Upper corner of the box domain
        grid_spacing: Voxel size for simulate, sweep-eta and the ODE check
        cells_per_epsilon: Resolution of the epsilon sweep, h = epsilon / cells_per_epsilon
        epsilons: Inclusion radii of the epsilon sweep (strictly decreasing)
        eta_epsilon: Inclusion radius used by the eta sweep
        etas: Conductivity contrasts of the eta sweep (strictly decreasing)
        sigma: Background diffusivity
        sigma_prime: Scaled inclusion constant
        c_in: Bound on the second moment of the centers and on the initial energy
        final_time: Final time tau
        dt: Time step
        dt_list: Time steps of the ODE check (strictly decreasing)
        rel_tol: Relative residual of the conjugate-gradient solves
        ledger_tol: Bound on energy-ledger residuals relative to the initial energy
        conservation_tol: Bound on relative drift of conserved functionals
        max_iter_factor: CG iteration cap is max_iter_factor * sqrt(unknowns)
        seed: Placement seed
        max_attempts: Rejection redraws allowed when repairing a placement
        density: Named density of inclusion centers
        initial_temperature: Named profile g_T for the background initial temperature
        initial_inclusion: Named profile g_theta for the inclusion initial temperatures
        ode_T0: Initial temperature of the ODE check
        ode_theta0: Initial vartheta of the ODE check
        ode_rho: Constant density of the ODE check
        model: Model stepped by the simulate command
        eta: Conductivity contrast of the simulate command (finite model)
        simulate_epsilon: Inclusion radius of the simulate command
        steps: Number of steps; derived from final_time / dt when unset
        corrector_epsilons: Radii tabulated by the correctors command (strictly decreasing)
        capacity_epsilons: Radii of the smooth capacity-pairing sweep (strictly decreasing)
        threads: Worker threads for independent sweep levels
    """

    schema_version: int = SCHEMA_VERSION
    domain_lower: Tuple[float, float, float] = (-1.0, -1.0, -1.0)
    domain_upper: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    grid_spacing: float = 0.125
    cells_per_epsilon: int = 4
    epsilons: List[float] = field(default_factory=lambda: [1 / 4, 1 / 8, 1 / 16])
    eta_epsilon: float = 1 / 4
    etas: List[float] = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    sigma: float = 1.0
    sigma_prime: float = 1.0
    c_in: float = 10.0
    final_time: float = 0.1
    dt: float = 1e-3
    dt_list: List[float] = field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3, 1.25e-3])
    rel_tol: float = 1e-10
    ledger_tol: float = 1e-8
    conservation_tol: float = 1e-9
    max_iter_factor: float = 10.0
    seed: int = 7
    max_attempts: int = 1000
    density: str = "uniform"
    initial_temperature: str = "cosine"
    initial_inclusion: str = "cosine"
    ode_T0: float = 1.0
    ode_theta0: float = 0.0
    ode_rho: float = 1.0
    model: str = "infinite"
    eta: float = 1e-2
    simulate_epsilon: float = 1 / 4
    steps: Optional[int] = None
    corrector_epsilons: List[float] = field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    capacity_epsilons: List[float] = field(default_factory=lambda: [1 / 4, 1 / 8, 1 / 16, 1 / 64])
    threads: int = 1
    explicit_keys: Tuple[str, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        """Validate configuration after initialization."""
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version must be {SCHEMA_VERSION}, got {self.schema_version!r}"
            )
        for key in ("domain_lower", "domain_upper"):
            value = getattr(self, key)
            if len(value) != 3:
                raise ConfigError(f"{key} must have 3 components")
            object.__setattr__(self, key, tuple(float(v) for v in value))
        for k in range(3):
            if not self.domain_upper[k] > self.domain_lower[k]:
                raise ConfigError(f"domain_upper[{k}] must exceed domain_lower[{k}]")
        for key in ("epsilons", "etas", "dt_list", "corrector_epsilons", "capacity_epsilons"):
            values = [float(v) for v in getattr(self, key)]
            if not values:
                raise ConfigError(f"{key} must not be empty")
            if any(not v > 0 for v in values):
                raise ConfigError(f"{key} entries must be positive")
            if any(b >= a for a, b in zip(values, values[1:])):
                raise ConfigError(f"{key} must be strictly decreasing")
            object.__setattr__(self, key, values)
        for key in (
            "grid_spacing",
            "eta_epsilon",
            "sigma",
            "sigma_prime",
            "c_in",
            "final_time",
            "dt",
            "rel_tol",
            "ledger_tol",
            "conservation_tol",
            "max_iter_factor",
            "ode_rho",
            "simulate_epsilon",
        ):
            value = getattr(self, key)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{key} must be a positive number, got {value!r}")
        if self.rel_tol > 1e-6:
            raise ConfigError("rel_tol must not exceed 1e-6")
        if any(eta > 1 for eta in self.etas) or not 0 < self.eta <= 1:
            raise ConfigError("eta values must lie in (0, 1]")
        if self.final_time < self.dt:
            raise ConfigError("final_time must be at least dt")
        if self.cells_per_epsilon < 1:
            raise ConfigError("cells_per_epsilon must be at least 1")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be positive when set")
        if self.density not in DENSITIES:
            raise ConfigError(f"density must be one of: {list(DENSITIES)}")
        for key in ("initial_temperature", "initial_inclusion"):
            if getattr(self, key) not in INITIAL_PROFILES:
                raise ConfigError(f"{key} must be one of: {list(INITIAL_PROFILES)}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of: {list(MODELS)}")

    @property
    def n_steps(self) -> int:
        """Number of time steps to reach final_time (or ``steps`` when set)."""
        if self.steps is not None:
            return self.steps
        return max(1, int(round(self.final_time / self.dt)))

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        unknown = sorted(set(overrides) - set(config_keys()))
        if unknown:
            raise ConfigError(f"Unknown configuration option(s): {unknown}")
        explicit = tuple(sorted(set(self.explicit_keys) | set(overrides)))
        return replace(self, explicit_keys=explicit, **overrides)

    def to_dict(self, include_runtime: bool = True) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for key in config_keys():
            if not include_runtime and key in RUNTIME_KEYS:
                continue
            value = getattr(self, key)
            out[key] = list(value) if isinstance(value, (list, tuple)) else value
        return out


def config_keys() -> List[str]:
    return [f.name for f in fields(ExperimentConfig) if f.name != "explicit_keys"]


DEFAULTS = ExperimentConfig()

# Command presets, applied beneath the config file for keys it does not set
COMMAND_PRESETS: Dict[str, Dict[str, Any]] = {
    "simulate": {},
    "sweep-eta": {
        # inclusion conductivity sigma/eta makes the system stiff
        "max_iter_factor": 100.0,
    },
    "sweep-epsilon": {
        "max_iter_factor": 20.0,
    },
    "ode-check": {},
    "correctors": {},
    "validate-geometry": {
        "epsilons": [1 / 4, 1 / 8, 1 / 16, 1 / 64],
    },
}


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Load a configuration file.

    Args:
        path: JSON file holding an object of configuration keys

    Returns:
        ExperimentConfig with the file's keys recorded as explicitly set

    Raises:
        ConfigError: If the file is missing, malformed, has unknown keys or fails validation
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse config file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    if "schema_version" not in data:
        raise ConfigError(f"config file {path} lacks schema_version")
    unknown = sorted(set(data) - set(config_keys()))
    if unknown:
        raise ConfigError(f"Unknown configuration option(s) in {path}: {unknown}")
    try:
        return ExperimentConfig(explicit_keys=tuple(sorted(data)), **data)
    except TypeError as e:
        raise ConfigError(f"invalid config file {path}: {e}")


def apply_preset(config: ExperimentConfig, command: str) -> ExperimentConfig:
    """Apply a command preset to keys the configuration did not set explicitly.

    Args:
        config: Configuration loaded from file or defaults
        command: CLI command name

    Returns:
        Configuration with the preset applied

    Raises:
        ConfigError: If the command is unknown
    """
    if command not in COMMAND_PRESETS:
        raise ConfigError(f"Unknown command '{command}'. Must be one of: {list(COMMAND_PRESETS)}")
    preset = {
        key: value
        for key, value in COMMAND_PRESETS[command].items()
        if key not in config.explicit_keys
    }
    if not preset:
        return config
    logger.debug("applying %s preset: %s", command, preset)
    return replace(config, **preset)


def configure_from_env(config: ExperimentConfig) -> ExperimentConfig:
    """Apply environment overrides.

    Environment variables:
        TWOTEMP_SEED: Placement seed
        TWOTEMP_THREADS: Worker threads for sweep levels
        TWOTEMP_LOG_LEVEL: Log level (read by the CLI)

    Returns:
        Configuration with environment overrides applied

    Raises:
        ConfigError: If a variable does not parse as an integer
    """
    overrides: Dict[str, Any] = {}
    for key, var in (("seed", "TWOTEMP_SEED"), ("threads", "TWOTEMP_THREADS")):
        raw = os.getenv(var)
        if raw is None or raw == "":
            continue
        try:
            overrides[key] = int(raw)
        except ValueError:
            raise ConfigError(f"{var} must be an integer, got {raw!r}")
    if not overrides:
        return config
    return config.with_overrides(**overrides)


def config_hash(config: ExperimentConfig) -> str:
    """Short stable hash of everything that determines a run's results."""
    canonical = json.dumps(config.to_dict(include_runtime=False), sort_keys=True)
    return hashlib.sha1(canonical.encode("utf-8")).hexdigest()[:12]
