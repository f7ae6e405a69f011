"""Finite fields, Gauss sums and the level sets of x_1² + ... + x_m²."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxlab.field import (fourier_coefficient, field_for, gauss_sum, gauss_sum_report, indicator_fourier_max,
                          level_set_sizes, minkowski_report, mq_operator, mq_operator_naive, quadratic_level_space)

GAUSS_TOLERANCE = 1e-9
FFT_AGREEMENT = 1e-9


class TestFields:
    """Prime fields up to 13, plus F_9 and F_27."""

    @pytest.mark.parametrize("q", [3, 5, 7, 9, 11, 13, 27])
    def test_supported_orders(self, q):
        assert field_for(q).q == q

    @pytest.mark.parametrize("q", [2, 4, 17, 25])
    def test_unsupported_orders(self, q):
        with pytest.raises(ValueError):
            field_for(q)

    def test_extension_field_axioms(self):
        field = field_for(9)
        elements = np.arange(9)
        for a in range(9):
            assert field.add_table[a, field.neg_table[a]] == 0
            assert field.mul_table[a, 1] == a
            if a:
                assert np.count_nonzero(field.mul_table[a, elements] == 1) == 1, f"{a} has no unique inverse"


class TestGaussSums:
    @pytest.mark.parametrize("q", [3, 5, 7, 9, 11, 13])
    def test_magnitude_is_root_q(self, q):
        report = gauss_sum_report(field_for(q))
        assert report["pass"].all()
        assert report["relative_error"].max() < GAUSS_TOLERANCE

    def test_zero_frequency(self):
        assert abs(gauss_sum(field_for(7), 0).value - 7) < GAUSS_TOLERANCE

    def test_rejects_foreign_element(self):
        with pytest.raises(ValueError):
            gauss_sum(field_for(5), 5)


class TestLevelSets:
    """Exact |E_z| against the window μ(X_q)/(2q) < |E_z| < 2μ(X_q)/q."""

    def test_sizes_when_minus_one_is_a_square(self):
        report = level_set_sizes(quadratic_level_space(5, 2))
        assert report["sizes"] == {0: 9, 1: 4, 2: 4, 3: 4, 4: 4}
        assert report["passed"] and report["symmetric"]

    def test_singleton_zero_level(self):
        report = level_set_sizes(quadratic_level_space(7, 2))
        assert report["sizes"][0] == 1
        assert not report["window"][0]
        assert all(report["window"][z] for z in range(1, 7))
        assert not report["passed"]

    @pytest.mark.parametrize("q, m", [(7, 3), (9, 3), (13, 2)])
    def test_window_holds(self, q, m):
        report = level_set_sizes(quadratic_level_space(q, m))
        assert report["passed"], f"window fails for q={q} m={m}: {report['sizes']}"
        assert report["total"] == q**m

    def test_default_dimension(self):
        assert quadratic_level_space(9).m == 3
        assert quadratic_level_space(5).m == 2


class TestFourierBound:
    def test_zero_frequency_coefficient(self):
        space = quadratic_level_space(5, 2)
        assert abs(fourier_coefficient(space, 0, 0) - 9 / 25) < GAUSS_TOLERANCE

    @pytest.mark.parametrize("z", range(5))
    def test_bound_on_q5(self, z):
        result = indicator_fourier_max(quadratic_level_space(5, 2), z)
        assert result["passed"], result["message"]
        assert result["bound"] == pytest.approx(1 / 5)

    def test_direct_and_fft_agree(self):
        space = quadratic_level_space(7, 2)
        direct = indicator_fourier_max(space, 3, method="direct")
        fft = indicator_fourier_max(space, 3, method="fft")
        assert abs(direct["max_fourier"] - fft["max_fourier"]) < FFT_AGREEMENT


class TestMinkowski:
    @pytest.mark.parametrize("q, m", [(7, 2), (7, 3)])
    def test_quarter_bound(self, q, m):
        report = minkowski_report(quadratic_level_space(q, m))
        assert report["pass"].all()
        assert (4 * report["measure"] >= q**m).all()


class TestMqOperator:
    def test_matches_double_loop(self):
        space = quadratic_level_space(5, 2)
        rng = np.random.default_rng(4)
        f = rng.integers(-3, 4, size=space.n_points)
        fast = mq_operator(space, f)
        slow = mq_operator_naive(space, f)
        assert [fast.value(x) for x in range(space.n_points)] == slow

    def test_large_denominators_stay_exact(self):
        space = quadratic_level_space(5, 2)
        rng = np.random.default_rng(11)
        f = [Fraction(int(a), int(b)) for a, b in zip(rng.integers(1, 10**6, size=25), rng.integers(1, 10**6, size=25))]
        fast = mq_operator(space, f)
        assert [fast.value(x) for x in range(space.n_points)] == mq_operator_naive(space, f)

    @settings(max_examples=25, deadline=None)
    @given(f=st.lists(st.fractions(min_value=-50, max_value=50, max_denominator=10**6), min_size=25, max_size=25))
    def test_rational_input_matches_double_loop(self, f):
        space = quadratic_level_space(5, 2)
        fast = mq_operator(space, f)
        assert [fast.value(x) for x in range(space.n_points)] == mq_operator_naive(space, f)

    @settings(max_examples=25, deadline=None)
    @given(f=st.lists(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), min_size=25, max_size=25))
    def test_float_input_matches_double_loop(self, f):
        space = quadratic_level_space(5, 2)
        fast = mq_operator(space, f)
        assert [fast.value(x) for x in range(space.n_points)] == mq_operator_naive(space, f)

    def test_point_mass_value(self):
        space = quadratic_level_space(5, 2)
        f = np.zeros(space.n_points, dtype=np.int64)
        f[0] = 1
        profile = mq_operator(space, f)
        assert profile.value(0) == Fraction(1, 9), "0 lies only in E_0, which has 9 points"
        assert max(profile.value(x) for x in range(space.n_points)) == Fraction(1, 4)
