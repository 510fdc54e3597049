"""Tests for the shared data models."""

import math

import numpy as np
import pytest

from twotemp.errors import InvalidEpsilon
from twotemp.models import (
    AdmissibilityReport,
    DensitySpec,
    Domain,
    EmpiricalMeasure,
    EnergyLedger,
    InclusionSet,
    LedgerEntry,
    MaterialParams,
    SweepReport,
    inclusion_count,
)


class TestInclusionCount:
    @pytest.mark.parametrize("epsilon,count", [(1.0, 1), (0.25, 4), (0.125, 8), (1 / 64, 64)])
    def test_integral_inverse(self, epsilon, count):
        assert inclusion_count(epsilon) == count

    @pytest.mark.parametrize("epsilon", [0.3, 0.0, -0.25, float("nan")])
    def test_rejects_non_integral_inverse(self, epsilon):
        with pytest.raises(InvalidEpsilon):
            inclusion_count(epsilon)

    def test_invalid_epsilon_is_a_value_error(self):
        with pytest.raises(ValueError, match=r"\[geometry\]"):
            inclusion_count(0.3)


class TestDomain:
    def test_default_is_side_two_cube(self):
        domain = Domain()
        assert domain.volume == pytest.approx(8.0)
        np.testing.assert_array_equal(domain.center, [0.0, 0.0, 0.0])

    def test_cube_constructor(self):
        domain = Domain.cube(4.0, center=(1.0, 0.0, 0.0))
        assert domain.lower == (-1.0, -2.0, -2.0)
        assert domain.upper == (3.0, 2.0, 2.0)
        assert domain.volume == pytest.approx(64.0)

    def test_rejects_empty_box(self):
        with pytest.raises(ValueError, match="upper"):
            Domain(lower=(0.0, 0.0, 0.0), upper=(1.0, 0.0, 1.0))


class TestInclusionSet:
    def test_derived_quantities(self):
        inclusions = InclusionSet(epsilon=0.5, centers=[[0.0, 0.0, 0.0], [0.9, 0.0, 0.0]])
        assert inclusions.count == 2
        assert inclusions.r_protect == pytest.approx(0.5 ** (1 / 3))

    def test_centers_are_read_only(self):
        inclusions = InclusionSet(epsilon=1.0, centers=[[0.0, 0.0, 0.0]])
        with pytest.raises(ValueError):
            inclusions.centers[0, 0] = 1.0

    def test_count_must_match_epsilon(self):
        with pytest.raises(InvalidEpsilon, match="does not match"):
            InclusionSet(epsilon=0.25, centers=np.zeros((3, 3)))


def test_density_must_be_normalized():
    with pytest.raises(ValueError, match="integrate to 1"):
        DensitySpec(evaluator=lambda p: np.ones(len(p)), normalization=2.0)


def test_density_evaluates_single_point():
    density = DensitySpec(evaluator=lambda p: np.full(len(p), 0.125))
    np.testing.assert_array_equal(density(np.zeros(3)), [0.125])


@pytest.mark.parametrize(
    "kwargs", [{"sigma": 0.0}, {"sigma_prime": -1.0}, {"eta": 0.0}, {"eta": 1.5}]
)
def test_material_params_validation(kwargs):
    with pytest.raises(ValueError):
        MaterialParams(**kwargs)


def test_supernode_capacity():
    params = MaterialParams(sigma=2.0, sigma_prime=4.0)
    assert params.ratio == 0.5
    assert params.supernode_capacity(0.1) == pytest.approx(0.05)


def test_admissibility_report_lists_violations():
    report = AdmissibilityReport(
        separation=[(0, 1)], containment=[1], second_moment=12.0, second_moment_bound=10.0
    )
    assert not report.admissible
    assert len(report.violations) == 3
    assert report.to_dict()["separation"] == [[0, 1]]


def test_empty_admissibility_report_is_admissible():
    report = AdmissibilityReport(second_moment=1.0, second_moment_bound=10.0)
    assert report.admissible
    assert report.min_gap == math.inf


class TestEnergyLedger:
    def make_ledger(self):
        ledger = EnergyLedger(tolerance=1e-8)
        ledger.append(LedgerEntry(step=0, time=0.0, stored=2.0, total_heat=4.0))
        ledger.append(
            LedgerEntry(
                step=1,
                time=0.1,
                stored=1.5,
                dissipated_increment=0.4,
                numerical_dissipation=0.1,
                residual=0.0,
                total_heat=4.0,
                extras={"max_Ti": 1.0},
            )
        )
        ledger.append(
            LedgerEntry(
                step=2,
                time=0.2,
                stored=1.2,
                dissipated_increment=0.25,
                numerical_dissipation=0.05,
                residual=1e-9,
                total_heat=4.0 + 4e-12,
                extras={"max_Ti": 0.9},
            )
        )
        return ledger

    def test_rows_accumulate_dissipation(self):
        ledger = self.make_ledger()
        assert ledger.columns()[-1] == "max_Ti"
        rows = ledger.rows()
        assert rows[2][3] == pytest.approx(0.65)
        assert rows[2][4] == pytest.approx(0.15)
        assert math.isnan(rows[0][-1])

    def test_residual_and_drift(self):
        ledger = self.make_ledger()
        assert ledger.max_relative_residual() == pytest.approx(5e-10)
        assert ledger.within_tolerance()
        assert ledger.heat_drift() == pytest.approx(1e-12)


def test_empirical_measure_pairing():
    measure = EmpiricalMeasure(
        positions=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), weights=np.array([0.5, 0.25])
    )
    assert measure.total_mass == pytest.approx(0.75)
    assert measure.pair(lambda p: 1.0 + p[:, 0]) == pytest.approx(1.0)


class TestSweepReport:
    def test_negative_metric_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            SweepReport(kind="x", parameter_name="eta", values=[1.0], metrics={"m": [-1.0]})

    def test_csv_table(self):
        report = SweepReport(
            kind="x",
            parameter_name="eta",
            values=[0.1, 0.01],
            metrics={"a": [2.0, 1.0], "b": [4.0, 3.0]},
            checks={"ok": True, "bad": False},
        )
        assert report.csv_header() == ["eta", "a", "b"]
        assert report.csv_rows() == [[0.1, 2.0, 4.0], [0.01, 1.0, 3.0]]
        assert not report.passed
        assert report.failed_checks == ["bad"]
        assert "ledgers" not in report.to_dict()
