"""Tests for inclusion placement, admissibility and empirical pairings."""

import json

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from twotemp.diagnostics import default_dictionary, monotone_decreasing, weak_distance
from twotemp.discretization import build_grid, cell_centers
from twotemp.errors import InvalidEpsilon, PackingInfeasible
from twotemp.geometry import (
    _lattice_shape,
    check_admissibility,
    density_from_function,
    inclusion_set_from_json,
    inclusion_set_to_json,
    inside_inclusions,
    integrate_density,
    nearest_inclusion,
    pair_empirical,
    place_inclusions,
    second_moment,
    uniform_density,
)
from twotemp.models import Domain, EmpiricalMeasure, InclusionSet


class TestPlacement:
    def test_eighth_fills_the_lattice(self, cube, uniform):
        inclusions = place_inclusions(1 / 8, uniform, cube, seed=7)
        assert inclusions.count == 8
        assert np.min(pdist(inclusions.centers)) > 1.0
        np.testing.assert_allclose(np.abs(inclusions.centers), 0.5, atol=1e-5)

    def test_placement_is_admissible(self, cube, uniform):
        for epsilon in (1 / 4, 1 / 8, 1 / 16, 1 / 64):
            inclusions = place_inclusions(epsilon, uniform, cube, seed=3)
            report = check_admissibility(inclusions, cube, c_in=10.0)
            assert report.admissible, report.violations
            assert report.min_gap > 0

    def test_single_inclusion_needs_room(self, uniform):
        big = Domain.cube(4.0)
        inclusions = place_inclusions(1.0, uniform_density(big), big, seed=0)
        assert inclusions.count == 1
        assert check_admissibility(inclusions, big, c_in=10.0).containment == []

    def test_single_inclusion_cannot_fit_side_two(self, cube, uniform):
        with pytest.raises(PackingInfeasible):
            place_inclusions(1.0, uniform, cube, max_attempts=10)

    def test_kepler_bound(self):
        unit = Domain.cube(1.0)
        with pytest.raises(PackingInfeasible) as info:
            place_inclusions(1 / 64, uniform_density(unit), unit)
        assert info.value.epsilon == pytest.approx(1 / 64)
        assert "cannot fit" in str(info.value)
        assert "epsilon=0.015625" in str(info.value)

    def test_same_seed_same_centers(self, cube, uniform):
        first = place_inclusions(1 / 16, uniform, cube, seed=11)
        second = place_inclusions(1 / 16, uniform, cube, seed=11)
        np.testing.assert_array_equal(first.centers, second.centers)

    @pytest.mark.parametrize("epsilon", [0.3, 2.0])
    def test_invalid_epsilon(self, cube, uniform, epsilon):
        with pytest.raises(InvalidEpsilon):
            place_inclusions(epsilon, uniform, cube)

    def test_linear_density_shifts_centers(self, cube):
        density = density_from_function(lambda p: 1.0 + 0.9 * p[:, 0], cube, name="tilted")
        inclusions = place_inclusions(1 / 64, density, cube, seed=5)
        assert np.mean(inclusions.centers[:, 0]) > 0.0

    def test_tilted_density_mean_matches_integral(self):
        big = Domain.cube(8.0)
        density = density_from_function(lambda p: 1.0 + 0.9 * p[:, 0] / 4.0, big, name="tilted")
        inclusions = place_inclusions(1 / 101, density, big, seed=2)

        def first(p):
            return p[:, 0]

        expected = integrate_density(density, big, first)
        assert expected == pytest.approx(1.2, abs=1e-2)
        assert pair_empirical(inclusions, first) == pytest.approx(expected, abs=0.1)

    def test_small_sets_center_on_the_density_mean(self, cube, uniform):
        for epsilon in (1 / 2, 1 / 4):
            inclusions = place_inclusions(epsilon, uniform, cube, seed=1)
            np.testing.assert_allclose(inclusions.centers.mean(axis=0), 0.0, atol=1e-12)
            distances = pdist(inclusions.centers)
            np.testing.assert_allclose(distances, distances[0], rtol=1e-12)

    def test_quadrature_error_falls_with_epsilon(self, cube, uniform):
        grid = build_grid(cube, 1 / 16)
        dictionary = default_dictionary(cube)

        def g_theta(p):
            return 1.0 + 0.5 * np.cos(np.pi * (p[:, 0] + 1.0) / 2.0)

        target = uniform(cell_centers(grid)) * g_theta(cell_centers(grid))
        errors = []
        for epsilon in (1 / 4, 1 / 8, 1 / 16, 1 / 64):
            centers = place_inclusions(epsilon, uniform, cube, seed=0).centers
            measure = EmpiricalMeasure(positions=centers, weights=g_theta(centers) / len(centers))
            errors.append(weak_distance(measure, target, dictionary, grid))
        assert monotone_decreasing(errors), errors

    @pytest.mark.parametrize(
        "count, levels, shape",
        [
            (8, (2, 2, 2), (2, 2, 2)),
            (16, (3, 3, 3), (3, 3, 2)),
            (32, (4, 4, 4), (4, 4, 2)),
            (64, (4, 4, 4), (4, 4, 4)),
            (100, (9, 9, 9), (5, 5, 4)),
            (101, (9, 9, 9), (5, 5, 5)),
            (28, (3, 3, 3), None),
        ],
    )
    def test_lattice_shape(self, count, levels, shape):
        assert _lattice_shape(count, levels) == shape


class TestAdmissibility:
    def test_separation_and_containment(self, cube):
        inclusions = InclusionSet(epsilon=0.5, centers=[[0.0, 0.0, 0.0], [0.7, 0.0, 0.0]])
        report = check_admissibility(inclusions, cube, c_in=10.0)
        assert report.separation == [(0, 1)]
        assert report.containment == [1]
        assert report.min_gap < 0
        assert not report.admissible

    def test_separation_at_exactly_twice_the_protection_radius(self, cube):
        r = InclusionSet(epsilon=0.5, centers=[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).r_protect
        touching = InclusionSet(epsilon=0.5, centers=[[-r, 0.0, 0.0], [r, 0.0, 0.0]])
        report = check_admissibility(touching, cube, c_in=10.0)
        assert report.separation == [(0, 1)]
        assert report.min_gap == 0.0

        apart = r * (1.0 + 1e-9)
        clear = InclusionSet(epsilon=0.5, centers=[[-apart, 0.0, 0.0], [apart, 0.0, 0.0]])
        assert check_admissibility(clear, cube, c_in=10.0).separation == []

    def test_second_moment_bound(self, cube):
        inclusions = InclusionSet(epsilon=1.0, centers=[[0.0, 0.0, 0.0]])
        report = check_admissibility(inclusions, cube, c_in=-1.0)
        assert report.second_moment_violated
        assert any(v.startswith("second_moment") for v in report.violations)

    def test_second_moment(self):
        inclusions = InclusionSet(epsilon=0.5, centers=[[1.0, 0.0, 0.0], [0.0, 2.0, 1.0]])
        assert second_moment(inclusions) == pytest.approx(3.0)


class TestPairing:
    def test_constant_pairing_is_one(self, placed_quarter):
        assert pair_empirical(placed_quarter, lambda p: np.ones(len(p))) == pytest.approx(1.0)

    def test_pairing_is_linear(self, placed_quarter):
        def phi(p):
            return p[:, 0] ** 2

        def psi(p):
            return np.sin(p[:, 1])

        combined = pair_empirical(placed_quarter, lambda p: 2.0 * phi(p) + 3.0 * psi(p))
        expected = 2.0 * pair_empirical(placed_quarter, phi) + 3.0 * pair_empirical(
            placed_quarter, psi
        )
        assert combined == pytest.approx(expected)


class TestDensity:
    def test_uniform_integrates_to_one(self, cube, uniform):
        assert integrate_density(uniform, cube, lambda p: np.ones(len(p))) == pytest.approx(1.0)

    def test_function_is_normalized(self, cube):
        density = density_from_function(lambda p: 2.0 + p[:, 0], cube)
        assert integrate_density(density, cube, lambda p: np.ones(len(p))) == pytest.approx(1.0)
        assert density(np.array([[0.0, 0.0, 0.0]]))[0] == pytest.approx(2.0 / 16.0)

    def test_rejects_nonpositive_function(self, cube):
        with pytest.raises(ValueError, match="strictly positive"):
            density_from_function(lambda p: p[:, 0], cube)


def test_inside_inclusions_labels(quarter_set):
    points = np.array([[0.6875, 0.6875, 0.0625], [0.0, 0.0, 0.0], [-0.6875, 0.5, 0.0625]])
    np.testing.assert_array_equal(inside_inclusions(quarter_set, points), [3, -1, 2])
    distances, indices = nearest_inclusion(quarter_set, points[:1])
    assert distances[0] == pytest.approx(0.0)
    assert indices[0] == 3


class TestJson:
    def test_round_trip(self, placed_quarter):
        loaded = inclusion_set_from_json(inclusion_set_to_json(placed_quarter))
        assert loaded.epsilon == placed_quarter.epsilon
        np.testing.assert_array_equal(loaded.centers, placed_quarter.centers)

    def test_count_mismatch(self, placed_quarter):
        data = placed_quarter.to_dict()
        data["count"] = 3
        with pytest.raises(InvalidEpsilon, match="stored count"):
            inclusion_set_from_json(json.dumps(data))

    def test_protection_radius_mismatch(self, placed_quarter):
        data = placed_quarter.to_dict()
        data["r_protect"] = 0.5
        with pytest.raises(InvalidEpsilon, match="r_protect"):
            inclusion_set_from_json(json.dumps(data))
