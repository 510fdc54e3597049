"""Finite-conductivity two-phase heat equation with its discrete energy ledger."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import sparse

from .discretization import (
    DiffusionOperator,
    Grid,
    PhaseMask,
    assemble_heat_operator,
    cell_centers,
    face_pairs,
    solve_backward_euler,
    stiffness_from_faces,
)
from .models import EnergyLedger, LedgerEntry, MaterialParams, PointFunction
from .serialization import write_csv

logger = logging.getLogger(__name__)


@dataclass
class FiniteState:
    """Temperature of the finite-conductivity model at one time.

    The ledger is shared by every state of one trajectory and grows as the
    trajectory is stepped.

    Attributes:
        time: Current time
        T: Per-cell temperature
        operator: Diffusion operator with the model's conductivity and capacity
        params: Material constants
        ledger: Energy ledger of the trajectory
        step: Number of steps taken
    """

    time: float
    T: np.ndarray
    operator: DiffusionOperator
    params: MaterialParams
    ledger: EnergyLedger
    step: int = 0

    @property
    def mask(self) -> Optional[PhaseMask]:
        return self.operator.mask


def material_coefficients(
    mask: PhaseMask,
    params: MaterialParams,
    cell_volume: float,
    scaled_inclusion_capacity: bool = False,
    epsilon: Optional[float] = None,
):
    """Per-cell conductivity and capacity of the two-phase material.

    Background cells get conductivity sigma and capacity 1; inclusion cells get
    conductivity sigma/eta, and with scaled capacity each inclusion holds a total
    capacity epsilon * sigma / sigma_prime spread evenly over its cells.
    """
    inclusion = ~mask.background
    conductivity = np.full(mask.labels.shape[0], params.sigma)
    conductivity[inclusion] = params.sigma / params.eta
    capacity = np.ones(mask.labels.shape[0])
    if scaled_inclusion_capacity and mask.n_inclusions:
        if epsilon is None:
            raise ValueError("epsilon is required for scaled inclusion capacity")
        counts = mask.cells_per_inclusion
        per_cell = params.supernode_capacity(epsilon) / (counts * cell_volume)
        capacity[inclusion] = per_cell[mask.labels[inclusion]]
    return conductivity, capacity


def inclusion_averages(mask: PhaseMask, values: np.ndarray) -> np.ndarray:
    """Mean of ``values`` over each inclusion's cells."""
    labels = mask.labels
    inside = labels >= 0
    sums = np.bincount(labels[inside], weights=values[inside], minlength=mask.n_inclusions)
    return sums / mask.cells_per_inclusion


def init_finite(
    grid: Grid,
    mask: PhaseMask,
    params: MaterialParams,
    t_in: PointFunction,
    scaled_inclusion_capacity: bool = False,
    epsilon: Optional[float] = None,
    average_inclusions: bool = True,
    ledger_tol: float = 1e-8,
) -> FiniteState:
    """Set up the finite-conductivity model.

    Args:
        grid: Voxel grid
        mask: Phase labels
        params: Material constants (eta sets the inclusion conductivity sigma/eta)
        t_in: Initial temperature, sampled at cell centers
        scaled_inclusion_capacity: Give each inclusion total capacity epsilon*sigma/sigma_prime
        epsilon: Inclusion radius (needed for the scaled capacity)
        average_inclusions: Replace each inclusion's values by their average
        ledger_tol: Relative bound on ledger residuals

    Returns:
        FiniteState at time 0 with the step-0 ledger entry
    """
    conductivity, capacity = material_coefficients(
        mask, params, grid.cell_volume, scaled_inclusion_capacity, epsilon
    )
    operator = assemble_heat_operator(grid, mask, conductivity, capacity)
    T = np.asarray(t_in(cell_centers(grid)), dtype=float).copy()
    if average_inclusions and mask.n_inclusions:
        inside = mask.labels >= 0
        T[inside] = inclusion_averages(mask, T)[mask.labels[inside]]

    ledger = EnergyLedger(tolerance=ledger_tol)
    ledger.append(
        LedgerEntry(step=0, time=0.0, stored=operator.energy(T), total_heat=operator.total_heat(T))
    )
    return FiniteState(time=0.0, T=T, operator=operator, params=params, ledger=ledger)


def ledger_entry(
    op: DiffusionOperator,
    previous: np.ndarray,
    current: np.ndarray,
    dt: float,
    step: int,
    time: float,
    previous_stored: float,
    **extras: float,
) -> LedgerEntry:
    """Backward-Euler energy identity terms for one step."""
    stored = op.energy(current)
    dissipated = dt * op.dissipation(current)
    numerical = op.energy(current - previous)
    return LedgerEntry(
        step=step,
        time=time,
        stored=stored,
        dissipated_increment=dissipated,
        numerical_dissipation=numerical,
        residual=stored - previous_stored + dissipated + numerical,
        total_heat=op.total_heat(current),
        extras=dict(extras),
    )


def step_finite(
    state: FiniteState, dt: float, rel_tol: float = 1e-10, max_iter_factor: float = 10.0
) -> FiniteState:
    """Advance one backward-Euler step and append its ledger entry.

    Raises:
        ValueError: If dt is not positive
        NoConvergence: If the linear solve fails
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    op = state.operator
    T = solve_backward_euler(op, state.T, dt, rel_tol, max_iter_factor=max_iter_factor)
    time = state.time + dt
    state.ledger.append(
        ledger_entry(op, state.T, T, dt, state.step + 1, time, state.ledger.last.stored)
    )
    return FiniteState(
        time=time, T=T, operator=op, params=state.params, ledger=state.ledger, step=state.step + 1
    )


def equilibrium_temperature(state: FiniteState) -> float:
    """Capacity-weighted mean temperature, the limit of the trajectory."""
    return state.operator.total_heat(state.T) / state.operator.total_mass


def export_ledger_csv(ledger: EnergyLedger, path: Union[str, Path]) -> Path:
    return write_csv(path, ledger.columns(), ledger.rows())


def inclusion_stiffness(state: FiniteState) -> sparse.csr_matrix:
    """Stiffness restricted to faces with both cells inside one inclusion."""
    op = state.operator
    assert op.grid is not None and op.mask is not None
    labels = op.mask.labels
    left, right = face_pairs(op.grid)
    inside = (labels[left] >= 0) & (labels[left] == labels[right])
    kappa = state.params.sigma / state.params.eta
    conductance = np.full(int(np.count_nonzero(inside)), op.grid.h * kappa)
    return stiffness_from_faces(op.n, left[inside], right[inside], conductance)


def inclusion_spread(state: FiniteState) -> float:
    """Largest max - min of T over the cells of one inclusion."""
    mask = state.mask
    if mask is None or mask.n_inclusions == 0:
        return 0.0
    inside = mask.labels >= 0
    labels = mask.labels[inside]
    values = state.T[inside]
    highs = np.full(mask.n_inclusions, -np.inf)
    lows = np.full(mask.n_inclusions, np.inf)
    np.maximum.at(highs, labels, values)
    np.minimum.at(lows, labels, values)
    return float(np.max(highs - lows))
