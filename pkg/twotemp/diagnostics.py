"""Norms, weak distances, conserved quantities and sweep statistics."""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import singledispatch
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .discretization import Grid
from .errors import GridMismatch
from .model_finite import FiniteState
from .model_homogenized import HomState, conserved_functional
from .model_infinite import InfiniteState
from .models import Domain, EmpiricalMeasure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TestDictionary:
    """Tensor-product cosines cos(k pi (x - lower) / side) per axis.

    Every member has zero normal derivative on the box and sup norm 1; wavenumber
    (0, 0, 0) is the constant function.

    Attributes:
        domain: Box the functions live on
        wavenumbers: (n_functions, 3) integer wavenumbers
    """

    __test__ = False

    domain: Domain
    wavenumbers: Tuple[Tuple[int, int, int], ...]

    def __post_init__(self):
        if not self.wavenumbers:
            raise ValueError("test dictionary must not be empty")

    def __len__(self) -> int:
        return len(self.wavenumbers)

    @property
    def sup_norms(self) -> np.ndarray:
        return np.ones(len(self.wavenumbers))

    def _axis_values(self, coordinates: np.ndarray, axis: int) -> np.ndarray:
        """(n_points, kmax + 1) values of the 1D cosines along one axis."""
        kmax = max(k[axis] for k in self.wavenumbers)
        scaled = (coordinates - self.domain.lower[axis]) / self.domain.sides[axis]
        return np.cos(math.pi * np.outer(scaled, np.arange(kmax + 1)))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """(n_points, n_functions) values at arbitrary points."""
        points = np.atleast_2d(points)
        per_axis = [self._axis_values(points[:, a], a) for a in range(3)]
        k = np.asarray(self.wavenumbers)
        return per_axis[0][:, k[:, 0]] * per_axis[1][:, k[:, 1]] * per_axis[2][:, k[:, 2]]

    def pair_field(self, grid: Grid, field: np.ndarray) -> np.ndarray:
        """sum over cells of cell_volume * field * psi(center), for every psi."""
        if np.asarray(field).shape != (grid.n_cells,):
            raise GridMismatch(
                f"field of shape {np.shape(field)} on a grid of {grid.n_cells} cells"
            )
        cube = np.asarray(field, dtype=float).reshape(grid.dims, order="F")
        lower, dims = grid.domain.lower, grid.dims
        centers = [lower[a] + (np.arange(dims[a]) + 0.5) * grid.h for a in range(3)]
        cx, cy, cz = (self._axis_values(centers[a], a) for a in range(3))
        moments = np.einsum("ijk,ia,jb,kc->abc", cube, cx, cy, cz, optimize=True)
        k = np.asarray(self.wavenumbers)
        return grid.cell_volume * moments[k[:, 0], k[:, 1], k[:, 2]]

    def pair_measure(self, measure: EmpiricalMeasure) -> np.ndarray:
        if len(measure.weights) == 0:
            return np.zeros(len(self))
        return measure.weights @ self.evaluate(measure.positions)


def default_dictionary(domain: Domain, kmax: int = 3) -> TestDictionary:
    """All tensor cosines with wavenumbers 0..kmax per axis, constant first."""
    wavenumbers = tuple(
        (i, j, k) for k, j, i in itertools.product(range(kmax + 1), repeat=3)
    )
    return TestDictionary(domain=domain, wavenumbers=wavenumbers)


def field_distance(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> float:
    """Weighted L2 distance sqrt(sum weights (a - b)^2).

    Raises:
        GridMismatch: If the fields or weights differ in shape
    """
    a, b, weights = np.asarray(a), np.asarray(b), np.asarray(weights)
    if a.shape != b.shape or a.shape != weights.shape:
        raise GridMismatch(f"shapes {a.shape}, {b.shape} and weights {weights.shape} differ")
    return math.sqrt(float(np.dot(weights, (a - b) ** 2)))


def weak_distance(
    mu: Union[EmpiricalMeasure, np.ndarray],
    nu: np.ndarray,
    dictionary: TestDictionary,
    grid: Grid,
) -> float:
    """max over psi of |<mu, psi> - sum cell_volume nu psi(center)| / sup |psi|.

    Args:
        mu: Empirical measure, or a per-cell field integrated like nu
        nu: Per-cell field
        dictionary: Test functions
        grid: Grid of the per-cell fields

    Raises:
        GridMismatch: If a field does not live on the grid
    """
    if isinstance(mu, EmpiricalMeasure):
        mu_pairings = dictionary.pair_measure(mu)
    else:
        mu_pairings = dictionary.pair_field(grid, mu)
    nu_pairings = dictionary.pair_field(grid, nu)
    return float(np.max(np.abs(mu_pairings - nu_pairings) / dictionary.sup_norms))


@singledispatch
def conserved_functionals(state) -> Dict[str, float]:
    """Model-appropriate conserved total heat (the w = 1 test function)."""
    raise TypeError(f"no conserved functional for {type(state).__name__}")


@conserved_functionals.register
def _(state: FiniteState) -> Dict[str, float]:
    return {"total_heat": state.operator.total_heat(state.T)}


@conserved_functionals.register
def _(state: InfiniteState) -> Dict[str, float]:
    system = state.system
    background = float(np.dot(system.operator.M[: system.n_background], state.T_background))
    inclusion = system.supernode_capacity * float(np.sum(state.T_inclusion))
    return {
        "total_heat": background + inclusion,
        "background_heat": background,
        "inclusion_heat": inclusion,
    }


@conserved_functionals.register
def _(state: HomState) -> Dict[str, float]:
    V = state.operator.M
    return {
        "total_heat": conserved_functional(state),
        "T_integral": float(np.dot(V, state.T)),
        "vartheta_integral": float(np.dot(V, state.vartheta)),
    }


def relative_drift(values: Sequence[float]) -> float:
    """Largest |v - v0| / |v0| along a series."""
    reference = values[0]
    scale = abs(reference) if reference != 0 else 1.0
    return max(abs(v - reference) for v in values) / scale


class SpacetimeDistance:
    """Accumulates dt-weighted discrete L2(0, tau; L2) and L2(0, tau; H1-seminorm) distances.

    Args:
        weights: Per-cell mass weights of the L2 part
        stiffness: Matrix whose quadratic form is the squared H1 seminorm
    """

    def __init__(self, weights: np.ndarray, stiffness):
        self.weights = np.asarray(weights)
        self.stiffness = stiffness
        self._l2_sq = 0.0
        self._h1_sq = 0.0

    def add(self, a: np.ndarray, b: np.ndarray, dt: float):
        if a.shape != b.shape or a.shape != self.weights.shape:
            raise GridMismatch(f"shapes {a.shape} and {b.shape} do not match the weights")
        diff = a - b
        self._l2_sq += dt * float(np.dot(self.weights, diff**2))
        self._h1_sq += dt * float(np.dot(self.stiffness @ diff, diff))

    @property
    def l2(self) -> float:
        return math.sqrt(self._l2_sq)

    @property
    def h1(self) -> float:
        return math.sqrt(max(self._h1_sq, 0.0))


def monotone_decreasing(metric: Sequence[float]) -> bool:
    """Strictly decreasing along the sweep."""
    return all(b < a for a, b in zip(metric, metric[1:]))


def fitted_rate(values: Sequence[float], metric: Sequence[float]) -> Optional[float]:
    """Least-squares slope of log(metric) against log(values).

    Returns:
        The slope, or None with fewer than 3 usable points
    """
    pairs: List[Tuple[float, float]] = [
        (math.log(v), math.log(m))
        for v, m in zip(values, metric)
        if v > 0 and m > 0 and math.isfinite(m)
    ]
    if len(pairs) < 3:
        return None
    x, y = np.array(pairs).T
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
