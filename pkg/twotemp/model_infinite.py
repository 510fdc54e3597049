"""Infinite-conductivity inclusion model.

Every inclusion is collapsed into one isothermal super-node whose capacity is the continuum
value epsilon * sigma / sigma_prime; background cells keep their own unknowns.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .discretization import (
    DiffusionOperator,
    Grid,
    PhaseMask,
    aggregation_map,
    assemble_heat_operator,
    cell_centers,
    face_conductance,
    face_pairs,
    solve_backward_euler,
    stiffness_from_faces,
)
from .errors import UnresolvedInclusion
from .model_finite import inclusion_averages, ledger_entry
from .models import (
    EmpiricalMeasure,
    EnergyLedger,
    InclusionSet,
    LedgerEntry,
    MaterialParams,
    PointFunction,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReducedSystem:
    """Diffusion operator on background cells plus one super-node per inclusion.

    Attributes:
        operator: Reduced stiffness and mass
        P: 0/1 aggregation map from reduced unknowns to cells
        index_map: Reduced unknown of every cell
        grid: Underlying grid
        mask: Phase labels
        params: Material constants
        epsilon: Inclusion radius
        supernode_capacity: Mass entry of every super-node, epsilon * sigma / sigma_prime
    """

    operator: DiffusionOperator
    P: sparse.csr_matrix
    index_map: np.ndarray
    grid: Grid
    mask: PhaseMask
    params: MaterialParams
    epsilon: float
    supernode_capacity: float

    @property
    def n_background(self) -> int:
        return self.mask.n_background

    @property
    def n_inclusions(self) -> int:
        return self.mask.n_inclusions

    @property
    def n(self) -> int:
        return self.operator.n


@dataclass
class InfiniteState:
    """Temperatures of the infinite-conductivity model at one time.

    Attributes:
        time: Current time
        T_background: Per-background-cell temperature
        T_inclusion: Per-inclusion temperature
        system: Reduced system being stepped
        ledger: Energy ledger of the trajectory
        step: Number of steps taken
    """

    time: float
    T_background: np.ndarray
    T_inclusion: np.ndarray
    system: ReducedSystem
    ledger: EnergyLedger
    step: int = 0

    @property
    def u(self) -> np.ndarray:
        """Stacked reduced unknowns."""
        return np.concatenate([self.T_background, self.T_inclusion])


def infinite_conductivity(mask: PhaseMask, params: MaterialParams) -> np.ndarray:
    conductivity = np.full(mask.labels.shape[0], params.sigma)
    conductivity[~mask.background] = np.inf
    return conductivity


def build_reduced_system(
    grid: Grid, mask: PhaseMask, inclusions: InclusionSet, params: MaterialParams
) -> ReducedSystem:
    """Assemble the reduced system directly on the aggregated unknowns.

    Faces inside one inclusion vanish; faces on an inclusion boundary couple the
    background cell to the super-node with conductance 2 sigma h.

    Raises:
        UnresolvedInclusion: If the mask does not resolve every inclusion of the set
    """
    if mask.n_inclusions != inclusions.count:
        raise ValueError(
            f"mask labels {mask.n_inclusions} inclusions, set has {inclusions.count}"
        )
    counts = mask.cells_per_inclusion
    if np.any(counts == 0):
        raise UnresolvedInclusion(
            f"inclusions {np.nonzero(counts == 0)[0].tolist()} own no cells"
        )
    P, index_map = aggregation_map(mask)
    n_reduced = mask.n_background + mask.n_inclusions

    left, right = face_pairs(grid)
    kappa = infinite_conductivity(mask, params)
    g = face_conductance(kappa[left], kappa[right], grid.h)
    red_left, red_right = index_map[left], index_map[right]
    keep = red_left != red_right
    if not np.all(np.isfinite(g[keep])):
        raise ValueError("distinct inclusions share a face")
    K = stiffness_from_faces(n_reduced, red_left[keep], red_right[keep], g[keep])

    capacity = params.supernode_capacity(inclusions.epsilon)
    M = np.concatenate(
        [np.full(mask.n_background, grid.cell_volume), np.full(mask.n_inclusions, capacity)]
    )
    logger.debug(
        "reduced system: %d background cells + %d super-nodes", mask.n_background, mask.n_inclusions
    )
    return ReducedSystem(
        operator=DiffusionOperator(K=K, M=M, grid=None, mask=mask),
        P=P,
        index_map=index_map,
        grid=grid,
        mask=mask,
        params=params,
        epsilon=inclusions.epsilon,
        supernode_capacity=capacity,
    )


def full_infinite_operator(system: ReducedSystem) -> DiffusionOperator:
    """Cell-level operator with infinite inclusion conductivity."""
    return assemble_heat_operator(
        system.grid, system.mask, infinite_conductivity(system.mask, system.params), 1.0
    )


def aggregation_defect(system: ReducedSystem, full_operator: DiffusionOperator) -> float:
    """max |P^T K_full P - K_red| over all entries."""
    P = system.P
    difference = (P.T @ full_operator.K @ P - system.operator.K).tocoo()
    if difference.nnz == 0:
        return 0.0
    return float(np.max(np.abs(difference.data)))


def _extras(T_inclusion: np.ndarray):
    return {
        "min_Ti": float(np.min(T_inclusion)),
        "max_Ti": float(np.max(T_inclusion)),
        "theta_pairing_const1": float(np.mean(T_inclusion)),
    }


def init_infinite(
    system: ReducedSystem, t_in: PointFunction, inclusions: InclusionSet, ledger_tol: float = 1e-8
) -> InfiniteState:
    """Sample background cells at their centers and average t_in over each inclusion.

    Returns:
        InfiniteState at time 0 with the step-0 ledger entry
    """
    if inclusions.count != system.n_inclusions:
        raise ValueError("inclusion set does not match the reduced system")
    samples = np.asarray(t_in(cell_centers(system.grid)), dtype=float)
    T_background = samples[system.mask.background].copy()
    T_inclusion = inclusion_averages(system.mask, samples)

    u = np.concatenate([T_background, T_inclusion])
    ledger = EnergyLedger(tolerance=ledger_tol)
    ledger.append(
        LedgerEntry(
            step=0,
            time=0.0,
            stored=system.operator.energy(u),
            total_heat=system.operator.total_heat(u),
            extras=_extras(T_inclusion),
        )
    )
    return InfiniteState(
        time=0.0,
        T_background=T_background,
        T_inclusion=T_inclusion,
        system=system,
        ledger=ledger,
    )


def step_infinite(
    state: InfiniteState, dt: float, rel_tol: float = 1e-10, max_iter_factor: float = 10.0
) -> InfiniteState:
    """One backward-Euler step of the coupled diffusion and super-node equations.

    Raises:
        ValueError: If dt is not positive
        NoConvergence: If the linear solve fails
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    system = state.system
    previous = state.u
    u = solve_backward_euler(
        system.operator, previous, dt, rel_tol, max_iter_factor=max_iter_factor
    )
    n_bg = system.n_background
    time = state.time + dt
    state.ledger.append(
        ledger_entry(
            system.operator,
            previous,
            u,
            dt,
            state.step + 1,
            time,
            state.ledger.last.stored,
            **_extras(u[n_bg:]),
        )
    )
    return InfiniteState(
        time=time,
        T_background=u[:n_bg],
        T_inclusion=u[n_bg:],
        system=system,
        ledger=state.ledger,
        step=state.step + 1,
    )


def theta_measure(state: InfiniteState, inclusions: InclusionSet) -> EmpiricalMeasure:
    """Empirical measure with atoms at the centers and weights T_i / N."""
    return EmpiricalMeasure(
        positions=inclusions.centers, weights=state.T_inclusion / inclusions.count
    )


def prolongate(system: ReducedSystem, state: InfiniteState) -> np.ndarray:
    """Per-cell field; inclusion cells carry their inclusion's temperature."""
    return system.P @ state.u


def initial_data_norm(state: InfiniteState) -> float:
    """Background L2 norm squared plus (sigma/sigma_prime) epsilon sum T_i^2."""
    system = state.system
    background = float(np.dot(system.operator.M[: system.n_background], state.T_background**2))
    return background + inclusion_second_moment(state)


def inclusion_second_moment(state: InfiniteState) -> float:
    """epsilon (sigma/sigma_prime) sum T_i^2."""
    return state.system.supernode_capacity * float(np.sum(state.T_inclusion**2))
