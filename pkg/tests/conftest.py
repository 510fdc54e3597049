"""Shared fixtures for the twotemp test suite."""

import numpy as np
import pytest

from twotemp.config import ExperimentConfig
from twotemp.discretization import build_grid, classify_cells
from twotemp.geometry import place_inclusions, uniform_density
from twotemp.models import Domain, InclusionSet, MaterialParams

# Cell centers of the h = 1/8 grid on the side-2 cube sit at odd multiples of 1/16
CELL_CENTERED = [
    (-0.6875, -0.6875, 0.0625),
    (0.6875, -0.6875, 0.0625),
    (-0.6875, 0.6875, 0.0625),
    (0.6875, 0.6875, 0.0625),
]


@pytest.fixture
def cube():
    """Side-2 cube centered at the origin."""
    return Domain()


@pytest.fixture
def uniform(cube):
    return uniform_density(cube)


@pytest.fixture
def params():
    return MaterialParams(sigma=1.0, sigma_prime=1.0, eta=1.0)


@pytest.fixture
def grid(cube):
    """16^3 grid, h = 1/8."""
    return build_grid(cube, 0.125)


@pytest.fixture
def quarter_set():
    """Four inclusions of radius 1/4 centered on cells of the h = 1/8 grid."""
    return InclusionSet(epsilon=0.25, centers=np.array(CELL_CENTERED))


@pytest.fixture
def quarter_mask(grid, quarter_set):
    return classify_cells(grid, quarter_set)


@pytest.fixture
def placed_quarter(cube, uniform):
    return place_inclusions(0.25, uniform, cube, seed=7)


@pytest.fixture
def small_config():
    """Configuration small enough for unit tests: 16^3 grid, ten steps."""
    return ExperimentConfig(
        final_time=0.01,
        dt=1e-3,
        etas=[1e-1, 1e-2],
        epsilons=[1 / 4, 1 / 8],
        cells_per_epsilon=2,
        dt_list=[1e-2, 5e-3, 2.5e-3, 1.25e-3],
        corrector_epsilons=[1e-1, 1e-2, 1e-3],
        capacity_epsilons=[1 / 4, 1 / 8, 1 / 16, 1 / 64],
    )
