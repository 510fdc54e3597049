"""Tests for the experiment harness."""

import math

import numpy as np
import pytest

from twotemp.config import DEFAULTS, apply_preset
from twotemp.geometry import integrate_density
from twotemp.harness import (
    EXPERIMENTS,
    checkpoint_steps,
    composite_initial,
    make_density,
    make_profile,
    map_levels,
    run_corrector_table,
    run_epsilon_sweep,
    run_eta_sweep,
    run_geometry_validation,
    run_ode_check,
    run_simulation,
)


def invariant_checks(report):
    """Ledger, conservation and admissibility checks, which hold at any resolution."""
    return {
        name: ok
        for name, ok in report.checks.items()
        if name.endswith(("_ledger_residual", "_conservation")) or name.startswith("admissible")
    }


class TestHelpers:
    def test_profiles(self, cube):
        points = np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        np.testing.assert_allclose(make_profile("constant", cube)(points), 1.0)
        np.testing.assert_allclose(make_profile("cosine", cube)(points), [1.5, 0.5, 1.0])
        np.testing.assert_allclose(make_profile("linear", cube)(points), [0.75, 1.25, 1.0])
        assert make_profile("gaussian", cube)(points)[2] == pytest.approx(1.0)
        with pytest.raises(ValueError):
            make_profile("step", cube)

    def test_linear_density_is_normalized(self, cube):
        density = make_density("linear", cube)
        assert integrate_density(density, cube, lambda p: np.ones(len(p))) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            make_density("clustered", cube)

    def test_composite_initial(self, quarter_set):
        initial = composite_initial(
            quarter_set, lambda p: np.zeros(len(p)), lambda p: np.ones(len(p))
        )
        points = np.array([quarter_set.centers[0], [0.0, 0.0, 0.0]])
        np.testing.assert_array_equal(initial(points), [1.0, 0.0])

    def test_checkpoints(self):
        assert checkpoint_steps(100) == [0, 25, 50, 75, 100]
        assert checkpoint_steps(1) == [0, 1]

    def test_map_levels_keeps_order(self):
        assert map_levels(lambda v: v * v, [3, 1, 2], threads=4) == [9, 1, 4]
        assert map_levels(lambda v: -v, [3, 1], threads=1) == [-3, -1]

    def test_every_command_is_wired(self):
        assert set(EXPERIMENTS) == {
            "simulate",
            "sweep-eta",
            "sweep-epsilon",
            "ode-check",
            "correctors",
            "validate-geometry",
        }


class TestOdeCheck:
    def test_acceptance(self):
        report = run_ode_check(DEFAULTS)
        assert report.passed, report.failed_checks
        assert report.monotone_decrease["max_rel_error"]
        low, high = 0.9, 1.1
        assert low <= report.fitted_rate["max_rel_error"] <= high
        assert report.scalars["error_at_dt"] <= 2e-2
        assert max(report.metrics["conservation_error"]) <= 1e-12
        assert report.scalars["exact_T_final"] == pytest.approx(
            0.5 + 0.5 * math.exp(-0.8 * math.pi)
        )
        assert sorted(report.ledgers) == ["dt_0.00125", "dt_0.0025", "dt_0.005", "dt_0.01"]

    def test_thread_count_does_not_change_the_report(self):
        single = run_ode_check(DEFAULTS)
        threaded = run_ode_check(DEFAULTS.with_overrides(threads=4))
        assert single.to_dict() == threaded.to_dict()


class TestCorrectorTable:
    def test_acceptance(self):
        report = run_corrector_table(DEFAULTS)
        assert report.passed, report.failed_checks
        assert report.csv_header()[:5] == [
            "epsilon",
            "r_eps",
            "l2_sq",
            "h1_semi_sq",
            "capacity_error_const_case",
        ]
        assert report.metrics["h1_semi_sq"][0] == pytest.approx(1.60178, rel=2e-4)
        assert report.scalars["capacity_limit"] < 0
        smooth = [report.scalars[f"capacity_error_smooth_eps_{e:.6g}"] for e in (1 / 4, 1 / 64)]
        assert smooth[1] < smooth[0]


class TestGeometryValidation:
    def test_acceptance(self):
        config = apply_preset(DEFAULTS, "validate-geometry")
        report = run_geometry_validation(config)
        assert report.passed, report.failed_checks
        assert len(report.values) == 4
        assert all(gap > 0 for gap in report.metrics["min_gap"])
        assert report.scalars["second_moment_limit"] == pytest.approx(1.0, rel=1e-3)
        assert report.checks["monotone_cosine_pairing_deviation"]
        assert report.scalars["cosine_pairing_limit"] == pytest.approx((2 / math.pi) ** 3, rel=1e-3)
        assert report.notes["pairing_deviation"].startswith("diagnostic")

    def test_pairing_deviations_fall_on_default_epsilons(self):
        report = run_geometry_validation(DEFAULTS)
        assert report.passed, report.failed_checks
        assert report.monotone_decrease["pairing_deviation"]
        assert report.monotone_decrease["cosine_pairing_deviation"]


@pytest.mark.slow
class TestSweeps:
    def test_eta_sweep(self, small_config):
        report = run_eta_sweep(small_config)
        assert report.kind == "eta_sweep"
        assert report.checks["aggregation_exact"]
        assert report.scalars["aggregation_defect"] == 0.0
        assert report.scalars["inclusions"] == 4.0
        checks = invariant_checks(report)
        assert "reference_ledger_residual" in checks
        assert all(checks.values()), checks
        for name in ("l2_spacetime", "h1_spacetime", "inclusion_dissipation", "inclusion_spread"):
            assert len(report.metrics[name]) == 2
        assert set(report.ledgers) == {"eta_0.1", "eta_0.01", "reference"}
        assert report.metrics["inclusion_spread"][1] < report.metrics["inclusion_spread"][0]

    def test_epsilon_sweep(self, small_config):
        report = run_epsilon_sweep(small_config)
        assert report.values == [0.25, 0.125]
        checks = invariant_checks(report)
        assert len(checks) == 2 * 5
        assert all(checks.values()), checks
        assert "background_l2" in report.notes
        assert all(v >= 0 for v in report.metrics["weak_theta"])
        for eps in ("0.25", "0.125"):
            assert report.checks[f"initial_data_bounded_eps_{eps}"]
            assert report.checks[f"energy_norm_nonincreasing_eps_{eps}"]
            assert report.checks[f"inclusion_moment_bounded_eps_{eps}"]
        norms = report.metrics["initial_data_norm"]
        assert all(
            peak <= norm for peak, norm in zip(report.metrics["inclusion_moment_peak"], norms)
        )

    def test_default_epsilon_sweep_trends(self):
        report = run_epsilon_sweep(apply_preset(DEFAULTS, "sweep-epsilon"))
        assert report.passed, report.failed_checks
        assert report.checks["monotone_weak_T"]
        assert report.checks["monotone_weak_theta"]
        assert report.monotone_decrease["initial_theta_weak"]

    def test_default_eta_sweep_trends(self):
        report = run_eta_sweep(apply_preset(DEFAULTS, "sweep-eta"))
        assert report.passed, report.failed_checks
        assert report.values == [1e-1, 1e-2, 1e-3, 1e-4]
        for name in ("l2_spacetime", "h1_spacetime", "inclusion_dissipation"):
            assert report.checks[f"monotone_{name}"], name
        assert report.scalars["final_decade_ratio"] >= 2.0

    @pytest.mark.parametrize("model", ["finite", "infinite", "homogenized"])
    def test_simulation(self, small_config, model):
        result = run_simulation(small_config.with_overrides(model=model))
        assert result.passed, result.failed_checks
        assert result.steps == 10
        assert result.final_time == pytest.approx(0.01)
        initial = result.functionals["initial"]["total_heat"]
        assert result.functionals["final"]["total_heat"] == pytest.approx(initial, rel=1e-9)
        data = result.to_dict()
        assert data["kind"] == "simulate"
        assert data["model"] == model
        assert len(result.csv_rows()) == 11
