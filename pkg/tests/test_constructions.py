"""Deterministic builders and their ball-structure tables."""

import numpy as np
import pytest

from maxlab.constructions import (CONSTRUCTIONS, ConstructionSpec, KaryTree, ad_regular_space, build_space,
                                  doubling_product_space, single_point, star_space)
from maxlab.treebounds import tree_distance_matrix
from maxlab.utils import BudgetExceededError
from maxlab.validation import SpaceValidator, regularity_check


class TestSmallSpaces:
    def test_star_shape(self):
        space = star_space(10)
        assert space.n_points == 82
        assert space.total_measure == 90
        assert space.weights[0] == 9

    def test_star_needs_two(self):
        with pytest.raises(ValueError):
            star_space(1)

    def test_euclidean_star_distances(self, euclid10):
        assert euclid10.n_points == 11
        assert euclid10.scale.value(euclid10.distance(0, 3)) == 1
        assert euclid10.scale.value(euclid10.distance(2, 3)) == pytest.approx(2**0.5)

    def test_single_point(self):
        space = single_point()
        assert space.n_points == 1
        assert space.min_positive_code is None


class TestDoublingProduct:
    """X_q × F_q^t with the 4^j + 2^-ℓ metric."""

    @pytest.fixture(scope="class")
    def product(self):
        return doubling_product_space(5, 2)

    def test_size(self, product):
        space, _ = product
        assert space.n_points == 25 * 25

    def test_ball_structure(self, product):
        _, table = product
        frame = table.to_frame()
        assert table.passed, frame[~frame["pass"]].to_string()
        assert (frame["predicted_measure"] == frame["observed_measure"]).all()

    def test_is_a_metric(self, product):
        space, _ = product
        assert SpaceValidator(exhaustive_limit=1000).triangle_inequality_check(space)["passed"]

    def test_doubling_with_constant_2q(self, product):
        space, _ = product
        assert regularity_check(space, "doubling", constant=10).passed

    def test_parameter_checks(self):
        with pytest.raises(ValueError):
            doubling_product_space(3, 2)
        with pytest.raises(ValueError):
            doubling_product_space(5, 6)


class TestADRegular:
    def test_small_instance(self):
        space, table = ad_regular_space(1, 2, 4)
        assert space.margin >= 0
        assert table.passed
        assert space.nested

    def test_parameter_checks(self):
        with pytest.raises(ValueError):
            ad_regular_space(4, 2, 4)
        with pytest.raises(ValueError):
            ad_regular_space(1, 2, 0)

    @pytest.mark.slow
    def test_acceptance_instance(self):
        space, table = ad_regular_space(2, 4, 16, m=3)
        assert space.n_points == 729 * 81
        assert table.passed and space.nested
        claim = space.claim_check()
        assert claim.passed, claim.message
        assert SpaceValidator().invariance_check(space, triples=10**5)["passed"]


class TestKaryTree:
    """BFS-ordered truncated trees."""

    def test_sizes(self, binary_tree):
        assert binary_tree.n_vertices == 15
        assert KaryTree(3, 2).n_vertices == 13

    def test_spheres(self, binary_tree):
        assert binary_tree.sphere_size(0, 2) == 4
        assert sorted(binary_tree.sphere(1, 2).tolist()) == [2, 7, 8, 9, 10]
        assert binary_tree.sphere_size(7, 1) == 1, "leaf children fall outside the truncation"
        assert binary_tree.infinite_sphere_size(7, 1) == 3

    def test_distance(self, binary_tree):
        assert binary_tree.distance(7, 8) == 2
        assert binary_tree.distance(7, 14) == 6
        assert binary_tree.distance(0, 0) == 0

    def test_explicit_space_matches_graph_distances(self):
        tree = KaryTree(3, 2)
        space = tree.as_space()
        assert np.array_equal(space.codes, tree_distance_matrix(tree))

    def test_budget(self):
        with pytest.raises(BudgetExceededError):
            KaryTree(4, 12, budget=1000)


class TestRegistry:
    def test_every_kind_is_buildable(self):
        small = {
            "star": {"K": 3},
            "euclidean_star": {"n": 4},
            "torus": {"size": 8},
            "doubling_product": {"q": 5, "t": 1},
            "ad_regular": {"k": 1, "t": 2, "n": 4},
            "kary_tree": {"k": 2, "D": 2},
        }
        assert set(small) == set(CONSTRUCTIONS)
        for kind, params in small.items():
            spec = ConstructionSpec(kind, params)
            construction = build_space(spec)
            assert construction.space.n_points == spec.point_count(), kind
            assert "params" in construction.descriptor(), kind

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            ConstructionSpec("moebius", {})
        with pytest.raises(ValueError):
            ConstructionSpec("star", {})

    def test_budget_guard(self):
        with pytest.raises(BudgetExceededError):
            build_space(ConstructionSpec("torus", {"size": 10**6}), budget=1000)
