"""Tests for distances, conserved quantities and sweep statistics."""

import math

import numpy as np
import pytest

from twotemp.diagnostics import (
    SpacetimeDistance,
    TestDictionary,
    conserved_functionals,
    default_dictionary,
    field_distance,
    fitted_rate,
    monotone_decreasing,
    relative_drift,
    weak_distance,
)
from twotemp.discretization import assemble_heat_operator, build_grid, cell_centers
from twotemp.errors import GridMismatch
from twotemp.model_homogenized import init_hom
from twotemp.models import EmpiricalMeasure


@pytest.fixture
def coarse(cube):
    return build_grid(cube, 0.5)


class TestFieldDistance:
    def test_constant_offset(self):
        weights = np.array([0.5, 0.25, 0.25])
        b = np.array([1.0, -2.0, 3.0])
        assert field_distance(b + 2.0, b, weights) == pytest.approx(2.0)

    def test_shape_mismatch(self):
        with pytest.raises(GridMismatch):
            field_distance(np.zeros(3), np.zeros(4), np.ones(3))


class TestDictionaryPairing:
    def test_default_dictionary(self, cube):
        dictionary = default_dictionary(cube)
        assert len(dictionary) == 64
        assert dictionary.wavenumbers[0] == (0, 0, 0)
        assert dictionary.wavenumbers[1] == (1, 0, 0)

    def test_empty_dictionary(self, cube):
        with pytest.raises(ValueError):
            TestDictionary(domain=cube, wavenumbers=())

    def test_constant_field_pairs_with_constant_only(self, cube, coarse):
        dictionary = default_dictionary(cube)
        pairings = dictionary.pair_field(coarse, np.ones(coarse.n_cells))
        assert pairings[0] == pytest.approx(8.0)
        np.testing.assert_allclose(pairings[1:], 0.0, atol=1e-12)

    def test_pair_field_matches_pointwise_sum(self, cube, coarse):
        dictionary = default_dictionary(cube, kmax=2)
        rng = np.random.default_rng(1)
        field = rng.normal(size=coarse.n_cells)
        values = dictionary.evaluate(cell_centers(coarse))
        expected = coarse.cell_volume * field @ values
        np.testing.assert_allclose(dictionary.pair_field(coarse, field), expected, atol=1e-12)

    def test_pair_field_rejects_wrong_grid(self, cube, coarse):
        with pytest.raises(GridMismatch):
            default_dictionary(cube).pair_field(coarse, np.ones(7))


class TestWeakDistance:
    def test_single_atom_against_zero(self, cube, coarse):
        atom = EmpiricalMeasure(positions=np.zeros((1, 3)), weights=np.array([1.0]))
        distance = weak_distance(atom, np.zeros(coarse.n_cells), default_dictionary(cube), coarse)
        assert distance == pytest.approx(1.0)

    def test_field_against_itself(self, cube, coarse):
        field = np.linspace(0.0, 1.0, coarse.n_cells)
        assert weak_distance(field, field, default_dictionary(cube), coarse) == 0.0

    def test_empty_measure(self, cube, coarse):
        empty = EmpiricalMeasure(positions=np.zeros((0, 3)), weights=np.zeros(0))
        field = np.full(coarse.n_cells, 0.125)
        assert weak_distance(empty, field, default_dictionary(cube), coarse) == pytest.approx(1.0)


class TestConservedFunctionals:
    def test_homogenized_uniform(self, coarse, uniform, params):
        state = init_hom(
            coarse, lambda p: np.full(len(p), 2.0), lambda p: np.zeros(len(p)), uniform, params
        )
        functionals = conserved_functionals(state)
        assert functionals["total_heat"] == pytest.approx(16.0)
        assert functionals["vartheta_integral"] == 0.0

    def test_unknown_state(self):
        with pytest.raises(TypeError):
            conserved_functionals(object())


class TestSpacetimeDistance:
    def test_constant_offset(self, coarse):
        stiffness = assemble_heat_operator(coarse, None, 1.0, 1.0).K
        distance = SpacetimeDistance(np.full(coarse.n_cells, coarse.cell_volume), stiffness)
        base = np.linspace(0.0, 1.0, coarse.n_cells)
        for _ in range(2):
            distance.add(base + 3.0, base, 0.1)
        assert distance.l2 == pytest.approx(math.sqrt(0.2 * 9.0 * 8.0))
        assert distance.h1 == pytest.approx(0.0, abs=1e-7)

    def test_shape_mismatch(self, coarse):
        distance = SpacetimeDistance(np.ones(coarse.n_cells), None)
        with pytest.raises(GridMismatch):
            distance.add(np.zeros(3), np.zeros(3), 0.1)


class TestSweepStatistics:
    def test_monotone(self):
        assert monotone_decreasing([3.0, 2.0, 1.0])
        assert not monotone_decreasing([3.0, 3.0, 1.0])
        assert monotone_decreasing([1.0])

    def test_fitted_rate(self):
        assert fitted_rate([1.0, 2.0, 4.0], [1.0, 4.0, 16.0]) == pytest.approx(2.0)
        assert fitted_rate([0.1, 0.01, 0.001], [1e-2, 1e-3, 1e-4]) == pytest.approx(1.0)

    def test_fitted_rate_needs_three_points(self):
        assert fitted_rate([1.0, 2.0], [1.0, 2.0]) is None
        assert fitted_rate([1.0, 2.0, 4.0], [1.0, 0.0, 2.0]) is None

    def test_relative_drift(self):
        assert relative_drift([2.0, 2.0, 2.2, 1.9]) == pytest.approx(0.1)
        assert relative_drift([0.0, 1e-3]) == pytest.approx(1e-3)
