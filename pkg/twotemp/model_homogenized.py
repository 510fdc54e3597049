"""Homogenized two-temperature system and its spatially uniform closed form.

The unknowns are the background temperature T and vartheta, the density-weighted
inclusion temperature:

    dT/dt - sigma Lap T + 4 pi sigma (rho T - vartheta) = 0
    dvartheta/dt + 4 pi sigma' (vartheta - rho T) = 0

with zero-flux boundary. theta = vartheta / rho is available as a derived field.

Written for theta, the second equation reads dtheta/dt + 4 pi sigma' (theta - T) = 0. A variant
with the exchange rate 4 pi rho sigma' differs from it by a factor rho; this module follows the
vartheta form above.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .discretization import (
    DiffusionOperator,
    Grid,
    assemble_heat_operator,
    cell_centers,
    solve_backward_euler,
)
from .models import DensitySpec, EnergyLedger, LedgerEntry, MaterialParams, PointFunction

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


@dataclass
class HomState:
    """Fields of the homogenized system at one time.

    Attributes:
        time: Current time
        T: Per-cell background temperature
        vartheta: Per-cell density-weighted inclusion temperature
        rho: Per-cell density of inclusion centers
        params: Material constants
        operator: Stiffness with conductivity sigma and mass = cell volume
        ledger: Lyapunov ledger of the trajectory
        step: Number of steps taken
    """

    time: float
    T: np.ndarray
    vartheta: np.ndarray
    rho: np.ndarray
    params: MaterialParams
    operator: DiffusionOperator
    ledger: EnergyLedger
    step: int = 0

    @property
    def grid(self) -> Grid:
        assert self.operator.grid is not None
        return self.operator.grid


def conserved_functional(state: HomState) -> float:
    """sum of cell_volume * (T + (sigma/sigma') vartheta)."""
    V = state.operator.M
    return float(np.dot(V, state.T) + state.params.ratio * np.dot(V, state.vartheta))


def lyapunov(state: HomState) -> float:
    """1/2 int T^2 + (sigma/sigma') 1/2 int vartheta^2 / rho."""
    V = state.operator.M
    return 0.5 * float(np.dot(V, state.T**2)) + 0.5 * state.params.ratio * float(
        np.dot(V, state.vartheta**2 / state.rho)
    )


def derived_theta(state: HomState) -> np.ndarray:
    """theta = vartheta / rho."""
    return state.vartheta / state.rho


def _extras(state: HomState):
    V = state.operator.M
    return {
        "L2_T": math.sqrt(float(np.dot(V, state.T**2))),
        "L2_vartheta": math.sqrt(float(np.dot(V, state.vartheta**2))),
        "conserved_functional": conserved_functional(state),
        "lyapunov_functional": lyapunov(state),
    }


def init_hom(
    grid: Grid,
    t_in: PointFunction,
    theta_in: PointFunction,
    density: DensitySpec,
    params: MaterialParams,
    ledger_tol: float = 1e-8,
) -> HomState:
    """Sample T, vartheta and rho at cell centers.

    Raises:
        ValueError: If the density is not positive on the grid
    """
    centers = cell_centers(grid)
    rho = density(centers)
    if not np.all(rho > 0):
        raise ValueError("density must be positive at every cell center")
    state = HomState(
        time=0.0,
        T=np.asarray(t_in(centers), dtype=float).copy(),
        vartheta=np.asarray(theta_in(centers), dtype=float).copy(),
        rho=rho,
        params=params,
        operator=assemble_heat_operator(grid, None, params.sigma, 1.0),
        ledger=EnergyLedger(tolerance=ledger_tol),
    )
    state.ledger.append(
        LedgerEntry(
            step=0,
            time=0.0,
            stored=lyapunov(state),
            total_heat=conserved_functional(state),
            extras=_extras(state),
        )
    )
    return state


def step_hom(
    state: HomState, dt: float, rel_tol: float = 1e-10, max_iter_factor: float = 10.0
) -> HomState:
    """One fully implicit step with vartheta eliminated.

    vartheta^{n+1} = (vartheta^n + a rho T^{n+1}) / (1 + a) with a = 4 pi sigma' dt turns the
    T equation into one SPD solve with zeroth-order coefficient 4 pi sigma rho / (1 + a).
    The ledger records the Lyapunov functional: its decrease equals dt |T|_K^2 plus the
    relaxation term dt 4 pi sigma int (rho T - vartheta)^2 / rho, up to the scheme's
    numerical dissipation and the solver residual.

    Raises:
        ValueError: If dt is not positive
        NoConvergence: If the linear solve fails
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    params = state.params
    V = state.operator.M
    a = FOUR_PI * params.sigma_prime * dt
    coupling = FOUR_PI * params.sigma / (1.0 + a)

    shifted_mass = V * (1.0 + dt * coupling * state.rho)
    rhs = V * state.T + dt * coupling * V * state.vartheta
    shifted = DiffusionOperator(K=state.operator.K, M=shifted_mass, grid=state.operator.grid)
    T = solve_backward_euler(
        shifted, rhs / shifted_mass, dt, rel_tol, max_iter_factor=max_iter_factor
    )
    vartheta = (state.vartheta + a * state.rho * T) / (1.0 + a)

    new = HomState(
        time=state.time + dt,
        T=T,
        vartheta=vartheta,
        rho=state.rho,
        params=params,
        operator=state.operator,
        ledger=state.ledger,
        step=state.step + 1,
    )
    stored = lyapunov(new)
    gap = state.rho * T - vartheta
    dissipated = dt * state.operator.dissipation(T) + dt * FOUR_PI * params.sigma * float(
        np.dot(V, gap**2 / state.rho)
    )
    numerical = 0.5 * float(np.dot(V, (T - state.T) ** 2)) + 0.5 * params.ratio * float(
        np.dot(V, (vartheta - state.vartheta) ** 2 / state.rho)
    )
    state.ledger.append(
        LedgerEntry(
            step=new.step,
            time=new.time,
            stored=stored,
            dissipated_increment=dissipated,
            numerical_dissipation=numerical,
            residual=stored - state.ledger.last.stored + dissipated + numerical,
            total_heat=conserved_functional(new),
            extras=_extras(new),
        )
    )
    return new


def homogeneous_equilibrium(
    c: float, rho: float, sigma: float, sigma_prime: float
) -> Tuple[float, float]:
    """Uniform equilibrium (T, rho T) carrying c = T + (sigma/sigma') vartheta."""
    T_inf = c / (1.0 + sigma * rho / sigma_prime)
    return T_inf, rho * T_inf


def ode_reduction(
    T0: float, th0: float, rho_const: float, sigma: float, sigma_prime: float, t: float
) -> Tuple[float, float]:
    """Exact solution of the spatially uniform system.

    T' = -4 pi sigma (rho T - vartheta), vartheta' = -4 pi sigma' (vartheta - rho T)
    conserves c = T + (sigma/sigma') vartheta and relaxes at rate 4 pi (sigma rho + sigma').

    Args:
        T0: Initial temperature
        th0: Initial vartheta
        rho_const: Constant density
        sigma: Background diffusivity
        sigma_prime: Inclusion constant
        t: Time

    Returns:
        (T(t), vartheta(t))

    Raises:
        ValueError: If rho_const is not positive
    """
    if not rho_const > 0:
        raise ValueError("rho_const must be positive")
    if t == 0:
        return float(T0), float(th0)
    ratio = sigma / sigma_prime
    c = T0 + ratio * th0
    T_inf, _ = homogeneous_equilibrium(c, rho_const, sigma, sigma_prime)
    rate = FOUR_PI * (sigma * rho_const + sigma_prime)
    T = T_inf + (T0 - T_inf) * math.exp(-rate * t)
    return T, (c - T) / ratio
