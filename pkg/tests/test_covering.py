"""Extended balls, intensity tables, Poisson selections and the tempered inequality."""

from fractions import Fraction

import numpy as np
import pytest

from maxlab.constructions import torus
from maxlab.covering import (LINDENSTRAUSS_CONSTANT, coverage_probability_check, extended_ball, intensity,
                             intensity_bounds_check, lindenstrauss_experiment, poisson_moments, sample_poisson,
                             subexp_radii)
from maxlab.maximal import geometric_radii
from maxlab.utils import HypothesisViolation


@pytest.fixture
def full_table(ring64):
    return intensity(ring64, np.ones(64, dtype=bool), 4, [1])


class TestExtendedBall:
    def test_cycle(self, ring64):
        members = extended_ball(ring64, 0, 8, [2])
        assert members.size == 21, "B(0, 8) enlarged by 2 is B(0, 10)"
        assert 10 in members and 54 in members and 11 not in members

    def test_without_lower_radii(self, ring64):
        assert extended_ball(ring64, 5, 3).size == 7

    def test_lower_radius_must_be_smaller(self, ring64):
        with pytest.raises(ValueError):
            extended_ball(ring64, 0, 4, [4])


class TestIntensity:
    """p(x) = 1/max μ(B*) over the r_k-ball, exact."""

    def test_invariant_values(self, full_table):
        assert full_table.value(0) == Fraction(1, 11)
        assert full_table.total == Fraction(64, 11)

    def test_off_support_is_zero(self, ring64):
        support = np.zeros(64, dtype=bool)
        support[:8] = True
        table = intensity(ring64, support, 4)
        assert table.value(20) == 0
        assert table.value(3) == Fraction(1, 9)
        assert table.probabilities().sum() == pytest.approx(1.0)

    def test_empty_support(self, ring64):
        with pytest.raises(ValueError):
            intensity(ring64, np.zeros(64, dtype=bool), 4)

    def test_bounds(self, ring64, full_table):
        result = intensity_bounds_check(ring64, full_table, Fraction(11, 9))
        assert result["passed"], result["message"]
        assert result["max_alpha"] == pytest.approx(9 / 11)
        assert not intensity_bounds_check(ring64, full_table, 1)["lower_bound_passed"]

    def test_finite_space(self, star5):
        table = intensity(star5, np.ones(star5.n_points, dtype=bool), 1)
        assert intensity_bounds_check(star5, table, 5)["alpha_witness"] is None


class TestPoissonSelection:
    def test_sample_structure(self, ring64, full_table):
        sample = sample_poisson(ring64, full_table, seed=3)
        assert sample.size == int(sample.multiplicity.sum())
        assert sample.check(ring64)["passed"]

    def test_reproducible(self, ring64, full_table):
        a = sample_poisson(ring64, full_table, seed=9)
        b = sample_poisson(ring64, full_table, seed=9)
        assert np.array_equal(a.points, b.points) and np.array_equal(a.multiplicity, b.multiplicity)

    def test_moments(self, ring64, full_table):
        frame = poisson_moments(ring64, full_table, [np.ones(64), np.arange(64) % 2], trials=4000, seed=0)
        assert len(frame) == 3
        assert frame.loc[0, "alpha_w"] == pytest.approx(64 / 11)
        assert frame["pass"].all(), frame.to_string()

    def test_coverage(self, ring64, full_table):
        frame = coverage_probability_check(ring64, full_table, centers=[0, 32], trials=4000, seed=1)
        assert frame.loc[0, "expected"] == pytest.approx(1 - np.exp(-9 / 11))
        assert frame["pass"].all(), frame.to_string()


class TestTemperedInequality:
    def test_subexp_radii_on_large_cycle(self):
        radii = subexp_radii(torus(4096), 5)
        assert radii.codes == (1, 1000, 2046, 2047, 2048)
        assert not radii.truncated

    def test_subexp_truncates(self, ring16):
        radii = subexp_radii(ring16, 5)
        assert radii.truncated

    def test_geometric_radii_pass(self, ring64):
        report = lindenstrauss_experiment(ring64, geometric_radii(ring64, 4), seed=0)
        assert report.passed, report.frame.to_string()
        assert report.K == report.tempered.worst_ratio
        assert not report.frame.empty
        assert report.to_dict()["constant"] == pytest.approx(LINDENSTRAUSS_CONSTANT)

    def test_explicit_constant_must_hold(self, ring64):
        with pytest.raises(HypothesisViolation):
            lindenstrauss_experiment(ring64, geometric_radii(ring64, 4), K=1)

    def test_lambda_must_be_positive(self, ring64):
        with pytest.raises(ValueError):
            lindenstrauss_experiment(ring64, geometric_radii(ring64, 4), lambda_grid=[0])
