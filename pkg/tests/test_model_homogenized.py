"""Tests for the homogenized two-temperature system."""

import math

import numpy as np
import pytest

from twotemp.discretization import build_grid
from twotemp.geometry import density_from_function
from twotemp.model_homogenized import (
    conserved_functional,
    derived_theta,
    homogeneous_equilibrium,
    init_hom,
    lyapunov,
    ode_reduction,
    step_hom,
)
from twotemp.models import DensitySpec, MaterialParams


def constant(value):
    return lambda p: np.full(len(p), value)


@pytest.fixture
def coarse(cube):
    """4^3 grid, h = 1/2."""
    return build_grid(cube, 0.5)


class TestInit:
    def test_conserved_functional(self, coarse, uniform, params):
        state = init_hom(coarse, constant(1.0), constant(0.0), uniform, params)
        assert conserved_functional(state) == pytest.approx(8.0)
        assert state.ledger.initial.total_heat == pytest.approx(8.0)
        assert lyapunov(state) == pytest.approx(4.0)

    def test_density_sampled_at_centers(self, coarse, uniform, params):
        state = init_hom(coarse, constant(1.0), constant(0.5), uniform, params)
        np.testing.assert_allclose(state.rho, 1.0 / 8.0)
        np.testing.assert_allclose(derived_theta(state), 4.0)

    def test_rejects_nonpositive_density(self, coarse, params):
        density = DensitySpec(evaluator=lambda p: p[:, 0])
        with pytest.raises(ValueError, match="positive"):
            init_hom(coarse, constant(1.0), constant(0.0), density, params)


class TestStep:
    def test_equilibrium_is_a_fixed_point(self, coarse, uniform, params):
        rho = 1.0 / 8.0
        state = init_hom(coarse, constant(2.0), constant(2.0 * rho), uniform, params)
        for _ in range(3):
            state = step_hom(state, 0.05)
        np.testing.assert_allclose(state.T, 2.0, rtol=1e-12)
        np.testing.assert_allclose(state.vartheta, 2.0 * rho, rtol=1e-12)

    def test_uniform_step_matches_hand_elimination(self, coarse, uniform, params):
        dt, rho = 0.01, 1.0 / 8.0
        state = step_hom(init_hom(coarse, constant(1.0), constant(0.0), uniform, params), dt)
        a = 4.0 * math.pi * dt
        c = 4.0 * math.pi / (1.0 + a)
        T1 = 1.0 / (1.0 + dt * c * rho)
        theta1 = a * rho * T1 / (1.0 + a)
        np.testing.assert_allclose(state.T, T1, rtol=1e-12)
        np.testing.assert_allclose(state.vartheta, theta1, rtol=1e-12)

    def test_lyapunov_and_conservation(self, coarse):
        params = MaterialParams(sigma=2.0, sigma_prime=0.5)
        density = density_from_function(lambda p: 1.0 + 0.5 * p[:, 0], coarse.domain)
        state = init_hom(
            coarse,
            lambda p: 1.0 + 0.5 * np.cos(math.pi * (p[:, 0] + 1.0) / 2.0),
            lambda p: density(p) * (1.0 - 0.5 * p[:, 1]),
            density,
            params,
        )
        c0 = conserved_functional(state)
        for _ in range(10):
            state = step_hom(state, 0.01)
        assert conserved_functional(state) == pytest.approx(c0, rel=1e-12)
        assert state.ledger.within_tolerance()
        values = [entry.stored for entry in state.ledger.entries]
        assert all(b <= a for a, b in zip(values, values[1:]))
        assert state.ledger.last.extras["lyapunov_functional"] == pytest.approx(values[-1])

    @pytest.mark.parametrize("steps", [100, pytest.param(1000, marks=pytest.mark.slow)])
    def test_long_run_conserves_and_closes_the_ledger(self, coarse, params, steps):
        density = density_from_function(lambda p: 1.0 + 0.5 * p[:, 0], coarse.domain)
        state = init_hom(
            coarse,
            lambda p: 1.0 + 0.5 * np.cos(math.pi * (p[:, 0] + 1.0) / 2.0),
            constant(0.0),
            density,
            params,
        )
        for _ in range(steps):
            state = step_hom(state, 1e-3)
        assert state.step == steps
        assert state.ledger.heat_drift() <= 1e-9
        assert state.ledger.max_relative_residual() <= 1e-8

    def test_rejects_nonpositive_dt(self, coarse, uniform, params):
        state = init_hom(coarse, constant(1.0), constant(0.0), uniform, params)
        with pytest.raises(ValueError, match="dt"):
            step_hom(state, 0.0)


class TestOdeReduction:
    def test_initial_value(self):
        assert ode_reduction(1.0, 0.0, 1.0, 1.0, 1.0, 0.0) == (1.0, 0.0)

    def test_relaxation(self):
        T, theta = ode_reduction(1.0, 0.0, 1.0, 1.0, 1.0, 0.1)
        assert T == pytest.approx(0.5 + 0.5 * math.exp(-0.8 * math.pi))
        assert theta == pytest.approx(1.0 - T)

    def test_long_time_limit(self):
        T, theta = ode_reduction(1.0, 0.0, 1.0, 1.0, 1.0, 10.0)
        assert T == pytest.approx(0.5)
        assert theta == pytest.approx(0.5)

    def test_conserves_weighted_sum(self):
        sigma, sigma_prime = 2.0, 0.5
        c0 = 3.0 + (sigma / sigma_prime) * 1.0
        for t in (0.01, 0.1, 1.0):
            T, theta = ode_reduction(3.0, 1.0, 0.25, sigma, sigma_prime, t)
            assert T + (sigma / sigma_prime) * theta == pytest.approx(c0)

    def test_equilibrium(self):
        T, theta = homogeneous_equilibrium(1.0, 1.0, 1.0, 1.0)
        assert (T, theta) == pytest.approx((0.5, 0.5))

    @pytest.mark.parametrize("rho", [0.0, -1.0])
    def test_rejects_nonpositive_density(self, rho):
        with pytest.raises(ValueError, match="rho"):
            ode_reduction(1.0, 0.0, rho, 1.0, 1.0, 0.1)
