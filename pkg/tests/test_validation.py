"""Exact regularity ratios and the structural validator."""

from fractions import Fraction

import numpy as np
import pytest

from maxlab.constructions import star_space, torus
from maxlab.mms import FiniteMetricSpace, LinearScale, RadiiSet
from maxlab.validation import SpaceValidator, regularity_check, tempered_check


class TestRegularity:
    """Suprema over the realized step intervals."""

    def test_torus_doubling_constant(self, ring16):
        report = regularity_check(ring16, "doubling")
        assert report.worst_ratio == 3, f"doubling ratio {report.worst_ratio}, expected 3 (B(x,<2) / B(x,<1))"
        assert report.witness[0] == 0
        assert report.passed is None

    @pytest.mark.parametrize("K", [2, 5, 10])
    def test_star_doubling_equals_K(self, K):
        assert regularity_check(star_space(K), "doubling").worst_ratio == K

    def test_verdict_against_constant(self, ring16):
        assert regularity_check(ring16, "doubling", constant=3).passed is True
        assert regularity_check(ring16, "doubling", constant=2).passed is False

    def test_microdoubling_on_cycle(self):
        report = regularity_check(torus(256), "microdoubling", {"n": 2}, constant=5)
        assert report.worst_ratio == 3
        assert report.passed

    def test_strong_microdoubling_dominates(self, star5):
        plain = regularity_check(star5, "microdoubling", {"n": 1})
        strong = regularity_check(star5, "strong-microdoubling", {"n": 1})
        assert strong.worst_ratio >= plain.worst_ratio
        assert len(strong.witness) == 3

    def test_rejects_unknown_kind(self, ring16):
        with pytest.raises(ValueError):
            regularity_check(ring16, "quadrupling")
        with pytest.raises(ValueError):
            regularity_check(ring16, "microdoubling", {"n": 0})

    def test_report_serializes(self, ring16):
        data = regularity_check(ring16, "doubling", constant=4).to_dict()
        assert data["kind"] == "doubling"
        assert data["passed"] is True


class TestTempered:
    def test_single_radius_on_invariant_space(self, ring64):
        report = tempered_check(ring64, RadiiSet((4,), ring64.scale), K=1)
        assert report.worst_ratio == 1
        assert report.passed

    def test_two_radii_use_enlarged_ball(self, ring64):
        report = tempered_check(ring64, RadiiSet((1, 4), ring64.scale))
        assert report.worst_ratio == Fraction(11, 9), "B(0,4,1) has 11 points, B(y,4) has 9"


class TestSpaceValidator:
    """Thresholds live on the validator instance."""

    def test_battery_passes_on_cycle(self, ring16):
        results = SpaceValidator(exhaustive_limit=100, sample_pairs=1000).run_all_validations(
            ring16, [{"kind": "doubling", "constant": 3}], verbose=False)
        assert results["all_passed"]
        assert set(results) >= {"triangle_inequality", "ball_monotonicity", "enlarged_sandwich", "invariance",
                                "doubling"}

    def test_triangle_violation_found(self):
        codes = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]])
        bad = FiniteMetricSpace(codes, LinearScale(1))
        result = SpaceValidator().triangle_inequality_check(bad)
        assert not result["passed"]
        assert result["witness"] == (0, 1, 2)

    def test_sampled_mode_on_large_space(self):
        result = SpaceValidator(exhaustive_limit=10, sample_pairs=5000).triangle_inequality_check(torus(4096))
        assert result["mode"] == "sampled"
        assert result["passed"]

    def test_verbose_banner(self, star5, capsys):
        SpaceValidator().run_all_validations(star5)
        out = capsys.readouterr().out
        assert "=" * 80 in out
        assert "1. Triangle Inequality" in out
        assert "ALL CHECKS PASSED" in out
