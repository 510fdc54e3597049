"""Data models shared across the twotemp modules."""

import math
import time
import traceback
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidEpsilon

Vector3 = Tuple[float, float, float]
PointFunction = Callable[[np.ndarray], np.ndarray]

# Tolerance on 1/epsilon being an integer
EPSILON_INTEGRALITY_TOL = 1e-9


def inclusion_count(epsilon: float) -> int:
    """Number of inclusions N = 1/epsilon, checked for integrality.

    Raises:
        InvalidEpsilon: If epsilon is not positive or 1/epsilon is not an integer
    """
    if not epsilon > 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {epsilon!r}")
    inverse = 1.0 / epsilon
    count = int(round(inverse))
    if count < 1 or abs(inverse - count) > EPSILON_INTEGRALITY_TOL:
        raise InvalidEpsilon(
            f"1/epsilon must be an integer (epsilon={epsilon!r}, 1/epsilon={inverse!r})"
        )
    return count


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box occupied by the composite material.

    Attributes:
        lower: Lower corner
        upper: Upper corner
    """

    lower: Vector3 = (-1.0, -1.0, -1.0)
    upper: Vector3 = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != 3 or len(self.upper) != 3:
            raise ValueError("domain corners must be 3-vectors")
        for k in range(3):
            if not self.upper[k] > self.lower[k]:
                raise ValueError(f"domain upper[{k}] must exceed lower[{k}]")

    @classmethod
    def cube(cls, side: float, center: Vector3 = (0.0, 0.0, 0.0)) -> "Domain":
        half = 0.5 * side
        return cls(
            lower=tuple(c - half for c in center),  # type: ignore[arg-type]
            upper=tuple(c + half for c in center),  # type: ignore[arg-type]
        )

    @property
    def sides(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    def to_dict(self) -> Dict[str, Any]:
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True)
class DensitySpec:
    """Probability density of inclusion centers on a domain.

    Attributes:
        evaluator: Vectorized map from an (n, 3) array of positions to n density values
        normalization: Integral of the density over the domain (must be 1)
        name: Label used in reports
    """

    evaluator: PointFunction
    normalization: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if abs(self.normalization - 1.0) > 1e-6:
            raise ValueError(f"density must integrate to 1, got {self.normalization!r}")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluator(np.atleast_2d(points)), dtype=float)


@dataclass(frozen=True)
class InclusionSet:
    """N identical spherical inclusions of radius epsilon.

    The count and protection radius are derived from epsilon; separation and containment
    are diagnosed by ``geometry.check_admissibility`` rather than enforced here, so that
    inadmissible sets can still be built and reported on.

    Attributes:
        epsilon: Inclusion radius
        centers: (N, 3) array of inclusion centers (read-only)
    """

    epsilon: float
    centers: np.ndarray

    def __post_init__(self):
        centers = np.array(self.centers, dtype=float).reshape(-1, 3)
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        expected = inclusion_count(self.epsilon)
        if centers.shape[0] != expected:
            raise InvalidEpsilon(
                f"inclusion count {centers.shape[0]} does not match round(1/epsilon)={expected}"
            )

    @property
    def count(self) -> int:
        return int(self.centers.shape[0])

    @property
    def r_protect(self) -> float:
        return self.epsilon ** (1.0 / 3.0)

    def to_dict(self) -> Dict[str, Any]:
        return {"epsilon": self.epsilon, "centers": self.centers.tolist()}


@dataclass
class AdmissibilityReport:
    """Result of checking an inclusion set against the scaling hypotheses.

    Attributes:
        separation: Index pairs (i, j) with |x_i - x_j| <= 2 r_protect
        containment: Indices whose ball touches or leaves the domain
        second_moment: Value of (1/N) sum |x_i|^2
        second_moment_bound: The bound C_in it was checked against
        min_gap: min over pairs of |x_i - x_j| - 2 r_protect (inf for a single inclusion)
    """

    separation: List[Tuple[int, int]] = field(default_factory=list)
    containment: List[int] = field(default_factory=list)
    second_moment: float = 0.0
    second_moment_bound: float = math.inf
    min_gap: float = math.inf

    @property
    def second_moment_violated(self) -> bool:
        return self.second_moment > self.second_moment_bound

    @property
    def violations(self) -> List[str]:
        found = []
        if self.separation:
            found.append(f"separation: pairs {self.separation}")
        if self.containment:
            found.append(f"containment: indices {self.containment}")
        if self.second_moment_violated:
            found.append(
                f"second_moment: {self.second_moment:.6g} > C_in={self.second_moment_bound:.6g}"
            )
        return found

    @property
    def admissible(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            "admissible": self.admissible,
            "violations": self.violations,
            "separation": [list(p) for p in self.separation],
            "containment": list(self.containment),
            "second_moment": self.second_moment,
            "second_moment_bound": self.second_moment_bound,
            "min_gap": self.min_gap,
        }


@dataclass(frozen=True)
class MaterialParams:
    """Scaled material constants.

    Attributes:
        sigma: Background diffusivity (kappa_A / rho_A C_A)
        sigma_prime: Inclusion constant 3 kappa_A / (4 pi rho_B C_B epsilon^2)
        eta: Conductivity contrast; inclusions conduct sigma / eta (finite model only)
    """

    sigma: float = 1.0
    sigma_prime: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.sigma_prime > 0:
            raise ValueError("sigma_prime must be positive")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")

    @property
    def ratio(self) -> float:
        """sigma / sigma_prime."""
        return self.sigma / self.sigma_prime

    def supernode_capacity(self, epsilon: float) -> float:
        """Scaled heat capacity of one inclusion, epsilon * sigma / sigma_prime."""
        return epsilon * self.ratio

    def to_dict(self) -> Dict[str, Any]:
        return {"sigma": self.sigma, "sigma_prime": self.sigma_prime, "eta": self.eta}


@dataclass(frozen=True)
class LedgerEntry:
    """One backward-Euler step of the discrete energy identity.

    Attributes:
        step: Step index (0 is the initial state)
        time: Time after the step
        stored: 1/2 |T|_M^2
        dissipated_increment: dt |T|_K^2
        numerical_dissipation: 1/2 |T^{n+1} - T^n|_M^2
        residual: stored(n+1) - stored(n) + dissipated_increment + numerical_dissipation
        total_heat: 1^T M T
        extras: Model-specific columns
    """

    step: int
    time: float
    stored: float
    dissipated_increment: float = 0.0
    numerical_dissipation: float = 0.0
    residual: float = 0.0
    total_heat: float = 0.0
    extras: Dict[str, float] = field(default_factory=dict)


class EnergyLedger:
    """Per-step record of the discrete energy identity for one trajectory.

    A ledger is owned by the stepping context that advances the state it belongs to.
    """

    BASE_COLUMNS = (
        "step",
        "time",
        "stored",
        "dissipated_cumulative",
        "numerical_dissipation_cumulative",
        "residual",
        "total_heat",
    )

    def __init__(self, tolerance: float = 1e-8):
        self.tolerance = tolerance
        self.entries: List[LedgerEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, entry: LedgerEntry) -> None:
        self.entries.append(entry)

    @property
    def initial(self) -> LedgerEntry:
        return self.entries[0]

    @property
    def last(self) -> LedgerEntry:
        return self.entries[-1]

    def max_abs_residual(self) -> float:
        return max((abs(e.residual) for e in self.entries[1:]), default=0.0)

    def max_relative_residual(self) -> float:
        """Largest |residual| relative to the initial stored energy."""
        scale = self.initial.stored if self.entries and self.initial.stored > 0 else 1.0
        return self.max_abs_residual() / scale

    def within_tolerance(self) -> bool:
        return self.max_relative_residual() <= self.tolerance

    def heat_drift(self) -> float:
        """Largest relative deviation of total heat from its initial value."""
        if not self.entries:
            return 0.0
        reference = self.initial.total_heat
        scale = abs(reference) if reference != 0 else 1.0
        return max(abs(e.total_heat - reference) for e in self.entries) / scale

    def columns(self) -> List[str]:
        extra_keys: List[str] = []
        for entry in self.entries:
            for key in entry.extras:
                if key not in extra_keys:
                    extra_keys.append(key)
        return list(self.BASE_COLUMNS) + extra_keys

    def rows(self) -> List[List[Any]]:
        """CSV rows in ``columns()`` order, with cumulative dissipation."""
        columns = self.columns()
        extra_keys = columns[len(self.BASE_COLUMNS):]
        dissipated = 0.0
        numerical = 0.0
        out = []
        for entry in self.entries:
            dissipated += entry.dissipated_increment
            numerical += entry.numerical_dissipation
            row: List[Any] = [
                entry.step,
                entry.time,
                entry.stored,
                dissipated,
                numerical,
                entry.residual,
                entry.total_heat,
            ]
            row.extend(entry.extras.get(key, float("nan")) for key in extra_keys)
            out.append(row)
        return out


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Finite sum of weighted Dirac masses.

    Attributes:
        positions: (N, 3) atom locations
        weights: (N,) atom weights
    """

    positions: np.ndarray
    weights: np.ndarray

    def pair(self, psi: PointFunction) -> float:
        """Pairing with a test function, sum_i w_i psi(x_i)."""
        if len(self.weights) == 0:
            return 0.0
        return float(np.dot(self.weights, np.asarray(psi(self.positions), dtype=float)))

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))


class RunStatus(Enum):
    """Run span status enumeration."""

    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class RunSpan:
    """Timing record of one unit of work (a sweep, a sweep level, a model run).

    Spans feed the log only; they never enter reports, which must be reproducible.

    Attributes:
        name: What is being run
        parent: Name of the enclosing span, if any
        start_time: perf_counter value at start
        end_time: perf_counter value at finish
        duration_ms: Duration in milliseconds
        status: Current status
        attributes: Parameters of the run (epsilon, eta, ...)
        error: Error information, if the run failed
    """

    name: str
    parent: Optional[str] = None
    start_time: float = field(default_factory=time.perf_counter)
    end_time: Optional[float] = None
    duration_ms: Optional[float] = None
    status: RunStatus = RunStatus.RUNNING
    attributes: Dict[str, Any] = field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None

    def set_attribute(self, key: str, value: Any):
        self.attributes[key] = value

    def set_error(self, error: BaseException):
        self.status = RunStatus.FAILED
        self.error = {
            "type": type(error).__name__,
            "message": str(error),
            "traceback": traceback.format_exc(),
        }

    def finish(self, status: Optional[RunStatus] = None):
        self.end_time = time.perf_counter()
        self.duration_ms = (self.end_time - self.start_time) * 1000.0
        if status:
            self.status = status
        elif self.status == RunStatus.RUNNING:
            self.status = RunStatus.COMPLETED

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "parent": self.parent,
            "duration_ms": self.duration_ms,
            "status": self.status.value,
            "attributes": self.attributes,
            "error": self.error,
        }


@dataclass
class SweepReport:
    """Outcome of one experiment.

    Attributes:
        kind: Experiment name ("eta_sweep", "epsilon_sweep", "ode_check", ...)
        parameter_name: Name of the swept parameter
        values: Parameter values in sweep order
        metrics: Named per-value error metrics
        monotone_decrease: Per-metric flag, strictly decreasing along the sweep
        fitted_rate: Per-metric log-log least-squares slope (None below 3 points)
        checks: Named pass/fail results of invariants and acceptance criteria
        scalars: Single-valued results (defects, errors at the configured dt)
        notes: Free-form labels (e.g. which metrics are diagnostic only)
        config: Echo of the configuration
        config_hash: Hash of the configuration
        version: Package version that produced the report
        ledgers: Per-run energy ledgers, written as CSV and kept out of the JSON report
    """

    kind: str
    parameter_name: str
    values: List[float] = field(default_factory=list)
    metrics: Dict[str, List[float]] = field(default_factory=dict)
    monotone_decrease: Dict[str, bool] = field(default_factory=dict)
    fitted_rate: Dict[str, Optional[float]] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)
    scalars: Dict[str, float] = field(default_factory=dict)
    notes: Dict[str, str] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    config_hash: str = ""
    version: str = ""
    ledgers: Dict[str, EnergyLedger] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Raises ValueError if a metric series has negative entries."""
        for name, series in self.metrics.items():
            if any(v < 0 for v in series if not math.isnan(v)):
                raise ValueError(f"metric {name!r} has negative entries")

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def failed_checks(self) -> List[str]:
        return [name for name, ok in self.checks.items() if not ok]

    def csv_header(self) -> List[str]:
        return [self.parameter_name] + list(self.metrics)

    def csv_rows(self) -> List[List[float]]:
        return [
            [value] + [self.metrics[name][i] for name in self.metrics]
            for i, value in enumerate(self.values)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "parameter_name": self.parameter_name,
            "values": list(self.values),
            "metrics": {k: list(v) for k, v in self.metrics.items()},
            "monotone_decrease": dict(self.monotone_decrease),
            "fitted_rate": dict(self.fitted_rate),
            "checks": dict(self.checks),
            "passed": self.passed,
            "scalars": dict(self.scalars),
            "notes": dict(self.notes),
            "config": self.config,
            "config_hash": self.config_hash,
            "version": self.version,
        }


def as_points(points: Sequence[Sequence[float]]) -> np.ndarray:
    """Coerce positions to an (n, 3) float array."""
    return np.asarray(points, dtype=float).reshape(-1, 3)
