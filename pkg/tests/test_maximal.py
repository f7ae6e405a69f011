"""Exact maximal profiles, weak-norm witnesses and the pointwise inequalities."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxlab.constructions import doubling_product_space, torus
from maxlab.maximal import (average, averaging_domination_check, band_ratio_bound, geometric_radii, lacunary_radii,
                            lifted_lower_bound_check, maximal_profile, modified_weak_bound_check, radii_bands,
                            single_radius_contraction, sparsification_check, strong_norm_estimate,
                            weak_norm_witness)
from maxlab.mms import RadiiSet


def _point_mass(space, x=0):
    f = np.zeros(space.n_points, dtype=np.int64)
    f[x] = 1
    return f


class TestWeakWitness:
    """Certified values are exact rationals for p = 1."""

    def test_star_hub_mass(self, star5):
        profile = maximal_profile(star5, _point_mass(star5), RadiiSet((0, 1, 2), star5.scale))
        assert profile.value(0) == 1
        assert profile.value(3) == Fraction(4, 5)
        certificate = weak_norm_witness(profile)
        assert certificate.certified_value == 4, f"witness {certificate.certified_value}, expected K-1 = 4"
        assert certificate.threshold == Fraction(4, 5)
        assert certificate.mass == 20

    def test_zero_function_is_rejected(self, ring16):
        profile = maximal_profile(ring16, np.zeros(16, dtype=np.int64), RadiiSet((1,), ring16.scale))
        with pytest.raises(ValueError):
            weak_norm_witness(profile)

    def test_levels_and_masses(self, star5):
        profile = maximal_profile(star5, _point_mass(star5), RadiiSet((0, 1, 2), star5.scale))
        assert profile.levels() == [(Fraction(1), 4), (Fraction(4, 5), 16)]
        assert profile.mass_at_least(Fraction(4, 5)) == 20
        assert profile.mass_above(Fraction(4, 5)) == 4

    def test_certificate_serializes(self, ring16):
        profile = maximal_profile(ring16, _point_mass(ring16), RadiiSet((2,), ring16.scale))
        data = weak_norm_witness(profile).to_dict()
        assert data["f"]["kind"] == "point_mass"
        assert data["R"]["codes"] == [2]

    def test_lp_witness_is_float(self, ring16):
        profile = maximal_profile(ring16, _point_mass(ring16), RadiiSet((1, 2), ring16.scale))
        assert isinstance(weak_norm_witness(profile, p=2).certified_value, float)


class TestEvaluationPaths:
    """Bulk, naive and delta paths agree value by value."""

    @pytest.mark.parametrize("variant", ["standard", "modified"])
    def test_bulk_matches_naive_on_star(self, star5, variant):
        f = np.random.default_rng(2).integers(-5, 6, size=star5.n_points)
        radii = RadiiSet.realized(star5)
        bulk = maximal_profile(star5, f, radii, variant=variant, method="bulk")
        naive = maximal_profile(star5, f, radii, variant=variant, method="naive")
        assert [bulk.value(x) for x in range(star5.n_points)] == [naive.value(x) for x in range(star5.n_points)]

    def test_bulk_matches_naive_on_cycle(self, ring16):
        f = np.random.default_rng(3).integers(0, 4, size=16)
        radii = RadiiSet((1, 3, 5), ring16.scale)
        bulk = maximal_profile(ring16, f, radii, method="bulk")
        naive = maximal_profile(ring16, f, radii, method="naive")
        assert [bulk.value(x) for x in range(16)] == [naive.value(x) for x in range(16)]

    def test_large_denominators_on_cycle(self, ring64):
        rng = np.random.default_rng(12)
        f = [Fraction(int(a), int(b)) for a, b in zip(rng.integers(1, 10**6, size=64), rng.integers(1, 10**6, size=64))]
        radii = RadiiSet.realized(ring64)
        bulk = maximal_profile(ring64, f, radii, method="bulk")
        naive = maximal_profile(ring64, f, radii, method="naive")
        assert [bulk.value(x) for x in range(64)] == [naive.value(x) for x in range(64)]

    def test_float_input_on_cycle(self, ring64):
        f = np.random.default_rng(13).random(64)
        radii = RadiiSet.realized(ring64)
        bulk = maximal_profile(ring64, f, radii, method="bulk")
        naive = maximal_profile(ring64, f, radii, method="naive")
        assert [bulk.value(x) for x in range(64)] == [naive.value(x) for x in range(64)]

    def test_integers_beyond_fft_range(self, ring16):
        f = [2**55 + 7 * x for x in range(16)]
        radii = RadiiSet((1, 4, 8), ring16.scale)
        bulk = maximal_profile(ring16, f, radii, method="bulk")
        naive = maximal_profile(ring16, f, radii, method="naive")
        assert [bulk.value(x) for x in range(16)] == [naive.value(x) for x in range(16)]

    @settings(max_examples=25, deadline=None)
    @given(f=st.lists(st.fractions(min_value=-50, max_value=50, max_denominator=10**6), min_size=16, max_size=16))
    def test_rationals_match_naive(self, f):
        space = torus(16)
        radii = RadiiSet((1, 3, 8), space.scale)
        bulk = maximal_profile(space, f, radii, method="bulk")
        naive = maximal_profile(space, f, radii, method="naive")
        assert [bulk.value(x) for x in range(16)] == [naive.value(x) for x in range(16)]

    @settings(max_examples=25, deadline=None)
    @given(f=st.lists(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), min_size=16, max_size=16))
    def test_floats_match_naive(self, f):
        space = torus(16)
        radii = RadiiSet((1, 3, 8), space.scale)
        bulk = maximal_profile(space, f, radii, method="bulk")
        naive = maximal_profile(space, f, radii, method="naive")
        assert [bulk.value(x) for x in range(16)] == [naive.value(x) for x in range(16)]

    def test_delta_matches_bulk(self, ring64):
        radii = lacunary_radii(ring64)
        f = _point_mass(ring64, 5)
        delta = maximal_profile(ring64, f, radii, method="delta")
        bulk = maximal_profile(ring64, f, radii, method="bulk")
        assert [delta.value(x) for x in range(64)] == [bulk.value(x) for x in range(64)]

    def test_delta_needs_point_mass(self, ring16):
        with pytest.raises(ValueError):
            maximal_profile(ring16, np.ones(16), RadiiSet((1,), ring16.scale), method="delta")

    def test_rejects_bad_arguments(self, ring16):
        radii = RadiiSet((1,), ring16.scale)
        with pytest.raises(ValueError):
            maximal_profile(ring16, np.ones(16), radii, variant="centered")
        with pytest.raises(ValueError):
            maximal_profile(ring16, np.ones(15), radii)

    def test_rational_input(self, ring16):
        f = [Fraction(1, 3)] + [0] * 15
        profile = maximal_profile(ring16, f, RadiiSet((1,), ring16.scale))
        assert profile.value(0) == Fraction(1, 9)

    def test_average(self, ring16):
        assert average(ring16, np.arange(16), 0, 2) == Fraction(32, 5)

    @settings(max_examples=30, deadline=None)
    @given(f=st.lists(st.integers(-3, 3), min_size=16, max_size=16),
           g=st.lists(st.integers(-3, 3), min_size=16, max_size=16),
           c=st.integers(-4, 4))
    def test_sublinear_and_homogeneous(self, f, g, c):
        space = torus(16)
        radii = RadiiSet((1, 3), space.scale)
        f, g = np.array(f), np.array(g)
        mf, mg = maximal_profile(space, f, radii), maximal_profile(space, g, radii)
        msum = maximal_profile(space, f + g, radii)
        mscaled = maximal_profile(space, c * f, radii)
        for x in range(16):
            assert msum.value(x) <= mf.value(x) + mg.value(x)
            assert mscaled.value(x) == abs(c) * mf.value(x)


class TestRadii:
    def test_lacunary_on_cycle(self, ring64):
        assert lacunary_radii(ring64).codes == (0, 1, 2, 4, 8, 16, 32)

    def test_geometric_on_cycle(self, ring64):
        assert geometric_radii(ring64, 4).codes == (1, 4, 16)
        with pytest.raises(ValueError):
            geometric_radii(ring64, 1)

    def test_bands_share_boundaries(self):
        radii = RadiiSet(tuple(range(1, 9)), torus(32).scale)
        bands = radii_bands(radii, 1, 4, 2)
        assert [band.radii.codes for band in bands] == [(1, 2), (2, 3, 4), (4, 5, 6, 7, 8)]
        disjoint = radii_bands(radii, 1, 4, 2, disjoint=True)
        assert [band.radii.codes for band in disjoint] == [(1, 2), (3, 4), (5, 6, 7, 8)]

    def test_band_ratio_bound(self):
        assert band_ratio_bound(2, 3)["passed"]
        assert not band_ratio_bound(2, 1)["passed"]


class TestInequalities:
    """Each check returns the usual result dict."""

    def test_modified_weak_bound(self, star5):
        result = modified_weak_bound_check(star5, _point_mass(star5), RadiiSet((0, 1, 2), star5.scale))
        assert result["passed"], result["message"]
        assert result["modified_witness"] <= 1
        assert result["doubling_constant"] == 5

    def test_sparsification(self, ring64):
        f = np.random.default_rng(5).integers(0, 3, size=64)
        radii = RadiiSet(tuple(range(1, 33)), ring64.scale)
        result = sparsification_check(ring64, f, radii, r=4, n=2, m=2, lam=Fraction(1, 2))
        assert result["passed"], result["message"]
        assert result["bands"] == 2

    def test_averaging_domination(self, ring64):
        f = np.random.default_rng(6).integers(0, 5, size=64)
        radii = RadiiSet(tuple(range(1, 33)), ring64.scale)
        result = averaging_domination_check(ring64, f, radii, r=8, n=2)
        assert result["passed"], result["message"]
        assert result["witness"] is None

    def test_single_radius_contraction(self, ring16, star5):
        on_cycle = single_radius_contraction(ring16, np.arange(16), 3)
        assert on_cycle["K"] == 1
        assert on_cycle["average_l1"] == on_cycle["f_l1"]
        assert on_cycle["weak_witness"] <= 1
        on_star = single_radius_contraction(star5, _point_mass(star5, 2), 1)
        assert on_star["passed"], on_star["message"]
        assert on_star["weak_witness"] <= on_star["K"]

    @pytest.mark.parametrize("r", [1, 2, 5])
    def test_averaging_weak_witness_on_cycle(self, ring16, r):
        f = np.random.default_rng(r).integers(0, 6, size=16)
        result = single_radius_contraction(ring16, f, r)
        assert result["weak_witness"] <= 1, f"weak witness {result['weak_witness']} on an invariant space"
        assert result["passed"]

    def test_strong_norm_is_a_lower_bound(self, ring16):
        radii = RadiiSet((1, 2, 4), ring16.scale)
        result = strong_norm_estimate(ring16, lambda f: maximal_profile(ring16, f, radii), p=2, trials=6)
        assert result["label"] == "LOWER BOUND"
        assert result["lower_bound"] >= 1 - 1e-12
        with pytest.raises(ValueError):
            strong_norm_estimate(ring16, lambda f: maximal_profile(ring16, f, radii), p=1, trials=6)


class TestLiftedBound:
    def test_point_mass_on_small_product(self):
        product, _ = doubling_product_space(5, 2)
        f_q = _point_mass(product.level_space)
        result = lifted_lower_bound_check(product, f_q)
        assert result["pointwise_passed"], result["message"]
        assert result["passed"]

    def test_shape_mismatch(self):
        product, _ = doubling_product_space(5, 1)
        with pytest.raises(ValueError):
            lifted_lower_bound_check(product, np.ones(3))
