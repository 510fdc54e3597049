"""Exception hierarchy for twotemp."""

from typing import Optional


class TwoTempError(Exception):
    """Base class for every error raised by twotemp.

    Args:
        message: Human-readable description naming the violated invariant
        module: Name of the module that detected the violation
    """

    module = "twotemp"

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message)
        if module is not None:
            self.module = module

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class InvalidEpsilon(TwoTempError, ValueError):
    """Inclusion radius whose inverse is not an integer, or outside the admissible range."""

    module = "geometry"


class PackingInfeasible(TwoTempError):
    """The separation constraint cannot be met in the domain."""

    module = "geometry"

    def __init__(self, message: str, epsilon: float):
        super().__init__(message)
        self.epsilon = epsilon


class IncommensurateSpacing(TwoTempError, ValueError):
    """Grid spacing does not divide the domain sides."""

    module = "discretization"


class UnresolvedInclusion(TwoTempError):
    """Some inclusion captures no cell center."""

    module = "discretization"


class NonpositiveCoefficient(TwoTempError, ValueError):
    """Conductivity or capacity not strictly positive."""

    module = "discretization"


class NoConvergence(TwoTempError):
    """Conjugate gradient hit its iteration cap."""

    module = "discretization"

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class GridMismatch(TwoTempError, ValueError):
    """Fields compared on different grids."""

    module = "diagnostics"


class ConfigError(TwoTempError, ValueError):
    """Configuration file missing, malformed or schema-invalid."""

    module = "config"


class InvariantViolation(TwoTempError):
    """A runtime invariant or acceptance check failed."""

    module = "harness"
