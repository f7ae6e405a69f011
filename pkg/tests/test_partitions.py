"""Padded partition trees, filtrations and the martingale inequalities."""

import math
from fractions import Fraction

import numpy as np
import pytest

from maxlab.constructions import torus
from maxlab.maximal import lacunary_radii
from maxlab.mms import RadiiSet
from maxlab.partitions import (Filtration, band_exponent, conditional_expectation, conditional_expectation_operator,
                               default_beta, doob_check, expected_padded_measure, global_max_operator,
                               localization_experiment, localization_gate, localized_depth, localized_operators,
                               modified_doob_check, padded_mask, padding_probability, sample_partition_tree)
from maxlab.utils import HypothesisViolation


class TestParameters:
    def test_default_beta(self):
        assert default_beta(2, 5) == pytest.approx(1 / (32 * math.log(5)))

    @pytest.mark.parametrize("beta, m", [(Fraction(1, 4), 2), (0.3, 2), (1, 0), (Fraction(1, 5), 3)])
    def test_band_exponent(self, beta, m):
        assert band_exponent(beta) == m

    def test_band_exponent_needs_positive_beta(self):
        with pytest.raises(ValueError):
            band_exponent(0)


class TestSampler:
    """Nested cells of bounded diameter."""

    @pytest.fixture
    def tree(self, ring64):
        return sample_partition_tree(ring64, depth=4, seed=0)

    def test_nested(self, tree):
        assert tree.depth == 4
        assert tree.n_cells(0) == 1
        assert tree.check_refinement()

    def test_diameters(self, tree, ring64):
        assert tree.check_diameters(ring64)

    def test_radii_in_range(self, tree):
        for k, r in enumerate(tree.radii, start=1):
            delta = Fraction(32, 2**k)
            assert delta / 4 <= r <= delta / 2, f"r_{k} = {r} outside [{delta / 4}, {delta / 2}]"

    def test_reproducible(self, ring64):
        a = sample_partition_tree(ring64, depth=3, seed=11)
        b = sample_partition_tree(ring64, depth=3, seed=11)
        assert np.array_equal(a.labels, b.labels)

    def test_finite_space(self, star5):
        tree = sample_partition_tree(star5, depth=2, seed=3)
        assert tree.check_refinement() and tree.check_diameters(star5)

    def test_depth_must_be_positive(self, ring16):
        with pytest.raises(ValueError):
            sample_partition_tree(ring16, depth=0)

    def test_padded_shape(self, tree, ring64):
        padded = tree.padded(ring64, Fraction(1, 8))
        assert padded.shape == (5, 64)
        assert padded[0].all()


class TestPaddedMask:
    def test_two_arcs(self, ring16):
        labels = np.repeat([0, 1], 8)
        padded = padded_mask(ring16, labels, 1)
        assert np.flatnonzero(~padded).tolist() == [0, 7, 8, 15]

    def test_radius_below_smallest_distance(self, ring16):
        assert padded_mask(ring16, np.arange(16), 0).all()

    def test_finite_space_single_cell(self, star5):
        assert padded_mask(star5, np.zeros(star5.n_points, dtype=np.int64), 2).all()


class TestPaddingProbability:
    """Wilson intervals over per-trial seed streams."""

    def test_report_shape(self, ring64):
        report = padding_probability(ring64, default_beta(2, 5), depth=3, trials=50, seed=0)
        assert report.counts.shape == (4, 64)
        assert (report.counts[0] == 50).all()
        assert len(report.to_frame()) == 4 * 64
        assert set(report.summary()) >= {"worst_wilson_lower", "passed", "beta"}

    def test_workers_do_not_change_counts(self, ring64):
        serial = padding_probability(ring64, Fraction(1, 16), depth=2, trials=20, seed=4)
        threaded = padding_probability(ring64, Fraction(1, 16), depth=2, trials=20, seed=4, workers=3)
        assert np.array_equal(serial.counts, threaded.counts)

    def test_rejects_bad_arguments(self, ring16):
        with pytest.raises(ValueError):
            padding_probability(ring16, -1, depth=2, trials=5)
        with pytest.raises(ValueError):
            padding_probability(ring16, Fraction(1, 8), depth=2, trials=0)

    def test_expected_padded_measure(self, ring64):
        omega = np.zeros(64, dtype=bool)
        omega[:16] = True
        frame = expected_padded_measure(ring64, omega, Fraction(1, 16), depth=2, trials=20, seed=1)
        assert len(frame) == 3
        assert frame.loc[0, "mean_padded_measure"] == 16
        assert frame.loc[0, "pass"]


class TestConditionalExpectation:
    def test_cell_averages(self):
        space = torus(4)
        result = conditional_expectation(space, [1, 3, 5, 7], np.array([0, 0, 1, 1]))
        assert result.tolist() == [2, 2, 6, 6]

    def test_weighted_cells(self, star5):
        f = np.zeros(star5.n_points, dtype=np.int64)
        f[0] = 1
        labels = np.zeros(star5.n_points, dtype=np.int64)
        labels[0] = labels[1] = 1
        result = conditional_expectation(star5, f, labels)
        assert result[0] == Fraction(4, 5), "hub weight 4 over a cell of measure 5"
        assert result[2] == 0

    def test_filtration_must_refine(self):
        with pytest.raises(ValueError):
            Filtration([np.zeros(4), np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1])])
        with pytest.raises(ValueError):
            Filtration([])


class TestDoob:
    def test_random_instance(self, ring16):
        tree = sample_partition_tree(ring16, depth=3, seed=5)
        f = np.random.default_rng(5).integers(-4, 5, size=16)
        result = doob_check(ring16, f, tree.filtration())
        assert result["passed"], result["message"]
        assert result["margin"] >= 0
        assert set(result["lp"]) == {2, 4}

    def test_zero_function(self, ring16):
        tree = sample_partition_tree(ring16, depth=2, seed=0)
        assert doob_check(ring16, np.zeros(16, dtype=np.int64), tree.filtration())["passed"]


class TestModifiedDoob:
    """Localization hypothesis and conclusion, reported separately."""

    def test_conditional_expectations_are_local(self, ring16):
        tree = sample_partition_tree(ring16, depth=2, seed=2)
        filtration = tree.filtration()
        operators = [conditional_expectation_operator(ring16, level) for level in filtration.levels]
        f = np.arange(16)
        result = modified_doob_check(ring16, filtration, operators, f, A=1, B=1)
        assert result["hypotheses_passed"] and result["conclusion_passed"], result["message"]

    def test_global_max_is_not_local(self, ring16):
        tree = sample_partition_tree(ring16, depth=2, seed=2)
        filtration = tree.filtration()
        f = np.ones(16, dtype=np.int64)
        f[0] = 5
        result = modified_doob_check(ring16, filtration, [global_max_operator(ring16)] * len(filtration), f, 1, 1)
        assert not result["hypotheses_passed"]
        assert result["hypothesis_witness"]["k"] == 1

    def test_operator_count_must_match(self, ring16):
        tree = sample_partition_tree(ring16, depth=2, seed=2)
        with pytest.raises(ValueError):
            modified_doob_check(ring16, tree.filtration(), [global_max_operator(ring16)], np.ones(16), 1, 1)

    @pytest.mark.parametrize("i", [0, 1, 2])
    def test_localized_family(self, ring64, i):
        beta = Fraction(1, 4)
        tree = sample_partition_tree(ring64, localized_depth(ring64, beta, i), seed=i)
        family = localized_operators(ring64, tree, beta, RadiiSet.realized(ring64), i)
        assert family.m == 2
        assert len(family.operators) == len(family.filtration)
        f = np.random.default_rng(i).integers(0, 4, size=64)
        result = modified_doob_check(ring64, family.filtration, family.callables(), f,
                                     family.mana_constant(), family.mnf_constant())
        assert result["passed"], result["message"]

    def test_localized_arguments(self, ring16):
        tree = sample_partition_tree(ring16, depth=2, seed=0)
        radii = RadiiSet.realized(ring16)
        with pytest.raises(ValueError):
            localized_operators(ring16, tree, Fraction(1, 4), radii, i=3)
        with pytest.raises(ValueError):
            localized_operators(ring16, tree, 1, radii)


class TestLocalization:
    def test_needs_K_at_least_five(self, ring64):
        with pytest.raises(HypothesisViolation):
            localization_experiment(ring64, lacunary_radii(ring64), n=2, K=4)

    def test_trivial_direction_on_cycle(self):
        ring = torus(256)
        frame = localization_experiment(ring, lacunary_radii(ring), n=2, K=5, band_samples=2)
        assert frame["trivial_direction"].all()
        assert (frame["ratio"] >= 1).all()

    def test_gate_on_star(self, star5):
        result = localization_gate(star5, RadiiSet.realized(star5), n=2)
        assert result["passed"], result["message"]
