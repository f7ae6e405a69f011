"""
Random padded partition trees, induced filtrations and the martingale-type
inequality harnesses built on them.

The sampler draws one iid center sequence x_1, x_2, ... from μ/μ(X) and, for
every level k, a radius r_k uniform on [Δ_k/4, Δ_k/2] with Δ_k = diam(X)/2^k.
A point x joins the first center within r_k; level-k cells are the classes of
(j_1(x), ..., j_k(x)). Cells are contained in balls of radius r_k, so their
diameters are at most Δ_k.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from statsmodels.stats.proportion import proportion_confint

from maxlab.maximal import MaximalProfile, integer_abs_density, maximal_profile, ratio_max, weak_norm_witness
from maxlab.mms import FiniteMetricSpace, GroupMetricSpace, MetricMeasureSpace, RadiiSet
from maxlab.utils import (HypothesisViolation, Number, SeedCapExceededError, as_integer_vector, make_rng,
                          status_icon, to_fraction, trial_rng)
from maxlab.validation import regularity_check

logger = logging.getLogger(__name__)

CAP_FACTOR = 64
BLOCK = 64
PADDING_SLACK = 0.03
EXHAUSTIVE_CELLS = 10
FLOAT_TOLERANCE = 1e-9


def default_beta(n: int, K: Number) -> float:
    """β = 1/(16 n log K) for an n-microdoubling space with constant K."""
    return 1.0 / (16 * n * math.log(float(K)))


def band_exponent(beta: Number) -> int:
    """Smallest integer m with 2^{-m} <= β."""
    beta = to_fraction(beta)
    if beta <= 0:
        raise ValueError(f"β must be positive, got {beta}")
    m = 0
    while Fraction(1, 2**m) > beta:
        m += 1
    return m


# ============================================================================
# PARTITION TREES
# ============================================================================

@dataclass
class PartitionTree:
    """
    Nested partitions P_0, ..., P_K of the point set.

    ``labels[k, x]`` is the cell id of x at level k; level 0 is the trivial
    partition. ``radii[k-1]`` is the sampled r_k and ``centers`` the center
    sequence actually consulted.
    """

    labels: np.ndarray
    diameter: Number
    radii: List[Number]
    centers: np.ndarray
    seed: Any = None
    level_targets: List[float] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return self.labels.shape[0] - 1

    def cell(self, k: int, x: int) -> np.ndarray:
        return np.flatnonzero(self.labels[k] == self.labels[k, x])

    def n_cells(self, k: int) -> int:
        return int(np.unique(self.labels[k]).size)

    def diameter_bound(self, k: int) -> Number:
        return self.diameter / 2**k

    def check_refinement(self) -> bool:
        for k in range(self.depth):
            pairs = np.unique(np.stack([self.labels[k], self.labels[k + 1]], axis=1), axis=0)
            if pairs.shape[0] != self.n_cells(k + 1):
                return False
        return self.n_cells(0) == 1

    def check_diameters(self, space: MetricMeasureSpace) -> bool:
        """diam(P_k(x)) <= diam(X)/2^k, exactly."""
        for k in range(1, self.depth + 1):
            bound = space.scale.code_floor(self.diameter_bound(k))
            cells, counts = np.unique(self.labels[k], return_counts=True)
            for c in cells[counts > 1]:
                members = np.flatnonzero(self.labels[k] == c)
                for x in members:
                    if space.distances_from(int(x))[members].max() > bound:
                        return False
        return True

    def filtration(self) -> "Filtration":
        return Filtration([self.labels[k] for k in range(self.depth + 1)])

    def padded(self, space: MetricMeasureSpace, beta: Number) -> np.ndarray:
        """(K+1, n) indicator of B(x, β·diam/2^k) ⊆ P_k(x)."""
        out = np.ones(self.labels.shape, dtype=bool)
        for k in range(1, self.depth + 1):
            radius = to_fraction(beta) * to_fraction(self.diameter) / 2**k
            out[k] = padded_mask(space, self.labels[k], space.scale.code_floor(radius))
        return out


def padded_mask(space: MetricMeasureSpace, labels: np.ndarray, radius_code: int) -> np.ndarray:
    """For every x, whether B(x, radius) lies inside the cell of x."""
    n = space.n_points
    smallest = space.min_positive_code
    if smallest is None or radius_code < smallest:
        return np.ones(n, dtype=bool)
    if isinstance(space, FiniteMetricSpace):
        inside = space.codes <= radius_code
        same = labels[:, None] == labels[None, :]
        return ~np.any(inside & ~same, axis=1)
    cells = np.unique(labels)
    if isinstance(space, GroupMetricSpace) and cells.size <= 2048:
        ball_size = space.ball_measure(0, radius_code)
        result = np.zeros(n, dtype=bool)
        for c in cells:
            mask = labels == c
            counts = space.ball_sums(mask.astype(np.int64), radius_code)
            result[mask] = counts[mask] == ball_size
        return result
    return np.array([np.all(labels[space.ball_mask(x, radius_code)] == labels[x]) for x in range(n)])


def sample_partition_tree(space: MetricMeasureSpace, depth: int, seed: Optional[int] = None,
                          rng: Optional[np.random.Generator] = None,
                          scale: Optional[Callable[[int], Number]] = None,
                          level_probability: Optional[Callable[[int], float]] = None,
                          cap_factor: int = CAP_FACTOR) -> PartitionTree:
    """
    Sample a random partition tree.

    Parameters:
    -----------
    space : MetricMeasureSpace
    depth : int
        Number of levels K >= 1.
    seed : int, optional
        Seed for a fresh generator (ignored when ``rng`` is given).
    scale : callable, optional
        k -> Δ_k; defaults to diam(X)/2^k.
    level_probability : callable, optional
        k -> padding target p_k stored on the tree; defaults to 1/2.
    cap_factor : int
        Draw cap is cap_factor · n_points · depth centers.

    Raises:
    -------
    SeedCapExceededError
        The center sequence hit the draw cap before covering some level.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    rng = rng if rng is not None else make_rng(seed)
    n = space.n_points
    diameter = space.scale.value(space.diameter_code)
    probabilities = space.weights / space.weights.sum()
    smallest = space.min_positive_code
    cap = cap_factor * n * depth
    batch = max(n, 64)

    centers = np.empty(0, dtype=np.int64)
    rows: List[np.ndarray] = []
    labels = np.zeros((depth + 1, n), dtype=np.int64)
    radii: List[Number] = []
    used = 0
    for k in range(1, depth + 1):
        delta = to_fraction(scale(k)) if scale is not None else to_fraction(diameter) / 2**k
        r_k = delta / 4 + Fraction(rng.random()) * delta / 4
        radii.append(r_k)
        code = space.scale.code_floor(r_k)
        if smallest is None or code < smallest:
            first_hit = np.arange(n)
        else:
            first_hit = np.full(n, -1, dtype=np.int64)
            position = 0
            while np.any(first_hit < 0):
                while len(rows) < position + BLOCK:
                    if len(rows) == centers.size:
                        if centers.size >= cap:
                            raise SeedCapExceededError(
                                f"Partition sampler on {space.name} drew {centers.size} centers "
                                f"without covering level {k}", seed)
                        centers = np.concatenate([centers, rng.choice(n, size=batch, p=probabilities)])
                    rows.append(space.distances_from(int(centers[len(rows)])))
                block = np.stack(rows[position:position + BLOCK]) <= code
                first = block.argmax(axis=0) + position
                fresh = (first_hit < 0) & block.any(axis=0)
                first_hit[fresh] = first[fresh]
                position += BLOCK
            used = max(used, int(first_hit.max()) + 1)
        _, inverse = np.unique(np.stack([labels[k - 1], first_hit], axis=1), axis=0, return_inverse=True)
        labels[k] = inverse.ravel()
    targets = [level_probability(k) if level_probability else 0.5 for k in range(depth + 1)]
    logger.debug("Sampled partition tree on %s: depth %d, %d centers", space.name, depth, used)
    return PartitionTree(labels, diameter, radii, centers[:used], seed, targets)


# ============================================================================
# PADDING
# ============================================================================

@dataclass
class PaddingReport:
    """Monte Carlo padding frequencies per (k, x) with Wilson 95% intervals."""

    beta: Number
    depth: int
    trials: int
    seed: int
    counts: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    targets: List[float]
    slack: float = PADDING_SLACK

    @property
    def estimates(self) -> np.ndarray:
        return self.counts / self.trials

    @property
    def passed(self) -> bool:
        thresholds = np.asarray(self.targets)[:, None] - self.slack
        return bool(np.all(self.lower >= thresholds))

    @property
    def worst_lower(self) -> float:
        return float(self.lower.min())

    def to_frame(self) -> pd.DataFrame:
        levels, points = np.indices(self.counts.shape)
        return pd.DataFrame({
            "k": levels.ravel(),
            "x": points.ravel(),
            "estimate": self.estimates.ravel(),
            "wilson_lo": self.lower.ravel(),
            "wilson_hi": self.upper.ravel(),
            "trials": self.trials,
        })

    def summary(self) -> Dict[str, Any]:
        return {"beta": self.beta, "depth": self.depth, "trials": self.trials, "seed": self.seed,
                "slack": self.slack, "worst_estimate": float(self.estimates.min()),
                "worst_wilson_lower": self.worst_lower, "passed": self.passed}


def run_trials(task: Callable[[int], Any], trials: int, workers: Optional[int] = None) -> List[Any]:
    """Run ``task(i)`` for every trial, in order, on an optional thread pool."""
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(task, range(trials)))
    return [task(i) for i in range(trials)]


def padding_probability(space: MetricMeasureSpace, beta: Number, depth: int, trials: int, seed: int = 0,
                        slack: float = PADDING_SLACK, workers: Optional[int] = None,
                        level_probability: Optional[Callable[[int], float]] = None) -> PaddingReport:
    """
    Fraction of sampled trees in which B(x, β·diam/2^k) ⊆ P_k(x), per (k, x).

    Trial i uses its own generator derived from (seed, i), so the report
    does not depend on ``workers``.
    """
    if to_fraction(beta) < 0:
        raise ValueError(f"β must be non-negative, got {beta}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")

    def one_tree(i: int) -> np.ndarray:
        tree = sample_partition_tree(space, depth, seed=(seed, i), rng=trial_rng(seed, i),
                                     level_probability=level_probability)
        return tree.padded(space, beta)

    counts = np.zeros((depth + 1, space.n_points), dtype=np.int64)
    for padded in run_trials(one_tree, trials, workers):
        counts += padded
    lower, upper = proportion_confint(counts, trials, alpha=0.05, method="wilson")
    targets = [level_probability(k) if level_probability else 0.5 for k in range(depth + 1)]
    report = PaddingReport(beta, depth, trials, seed, counts, np.asarray(lower), np.asarray(upper), targets, slack)
    logger.info("Padding on %s: worst Wilson lower %.4f (%s)", space.name, report.worst_lower,
                "pass" if report.passed else "FAIL")
    return report


def expected_padded_measure(space: MetricMeasureSpace, omega: np.ndarray, beta: Number, depth: int,
                            trials: int, seed: int = 0, slack: float = PADDING_SLACK) -> pd.DataFrame:
    """
    Mean of μ(Ω^{pad(k)}_β) over sampled trees, per level, against μ(Ω)/2.

    Each row passes when mean >= (1/2 - slack)·μ(Ω).
    """
    omega = np.asarray(omega, dtype=bool)
    total = np.zeros(depth + 1, dtype=np.float64)
    squares = np.zeros(depth + 1, dtype=np.float64)
    for i in range(trials):
        tree = sample_partition_tree(space, depth, seed=(seed, i), rng=trial_rng(seed, i))
        padded = tree.padded(space, beta)
        measures = (padded & omega[None, :]) @ space.weights
        total += measures
        squares += measures.astype(np.float64) ** 2
    omega_measure = int(space.weights[omega].sum())
    mean = total / trials
    spread = np.sqrt(np.maximum(squares / trials - mean**2, 0.0) / trials)
    rows = []
    for k in range(depth + 1):
        rows.append({"k": k, "mean_padded_measure": mean[k], "standard_error": spread[k],
                     "omega_measure": omega_measure, "half_omega": omega_measure / 2,
                     "pass": mean[k] >= (0.5 - slack) * omega_measure})
    return pd.DataFrame(rows)


# ============================================================================
# FILTRATIONS AND CONDITIONAL EXPECTATION
# ============================================================================

@dataclass
class Filtration:
    """F_0 ⊆ ... ⊆ F_K, each level given by cell labels."""

    levels: List[np.ndarray]

    def __post_init__(self):
        self.levels = [np.asarray(level) for level in self.levels]
        if not self.levels:
            raise ValueError("Filtration needs at least one level")
        for k in range(len(self.levels) - 1):
            coarse, fine = self.levels[k], self.levels[k + 1]
            pairs = np.unique(np.stack([coarse, fine], axis=1), axis=0)
            if pairs.shape[0] != np.unique(fine).size:
                raise ValueError(f"Level {k + 1} does not refine level {k}")

    def __len__(self) -> int:
        return len(self.levels)


def cell_sums(labels: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(per-cell sums, per-point cell index)."""
    cells, inverse = np.unique(labels, return_inverse=True)
    inverse = inverse.ravel()
    sums = np.zeros(cells.size, dtype=values.dtype)
    np.add.at(sums, inverse, values)
    return sums, inverse


def _conditional_parts(space: MetricMeasureSpace, f, labels) -> Tuple[np.ndarray, np.ndarray, Fraction]:
    ints, unit = as_integer_vector(f)
    if ints.shape != (space.n_points,):
        raise ValueError(f"f has shape {ints.shape}, space has {space.n_points} points")
    sums, inverse = cell_sums(labels, ints * space.weights)
    measures, _ = cell_sums(labels, space.weights)
    return sums[inverse], measures[inverse], unit


def conditional_expectation(space: MetricMeasureSpace, f, partition: np.ndarray) -> np.ndarray:
    """E(f | partition): on each cell C the constant Σ_C f·μ / μ(C), as Fractions."""
    num, den, unit = _conditional_parts(space, f, partition)
    return np.array([unit * Fraction(int(a), int(b)) for a, b in zip(num, den)], dtype=object)


def conditional_expectation_operator(space: MetricMeasureSpace, labels: np.ndarray) -> Callable[[Any], MaximalProfile]:
    """f -> |E(f | labels)| as a profile."""

    def apply(f) -> MaximalProfile:
        num, den, unit = _conditional_parts(space, f, labels)
        f_abs, _ = integer_abs_density(space, f)
        return MaximalProfile(np.abs(num), den, unit, f_abs, space.weights, space.measure_unit,
                              variant="conditional_expectation")

    return apply


def global_max_operator(space: MetricMeasureSpace) -> Callable[[Any], MaximalProfile]:
    """f -> max|f| everywhere; not local, used as a negative control."""

    def apply(f) -> MaximalProfile:
        f_abs, unit = integer_abs_density(space, f)
        top = int(f_abs.max(initial=0))
        return MaximalProfile(np.full(space.n_points, top, dtype=np.int64), np.ones(space.n_points, dtype=np.int64),
                              unit, f_abs, space.weights, space.measure_unit, variant="global_max")

    return apply


def _supremum(profiles: Sequence[MaximalProfile]) -> MaximalProfile:
    num, den = profiles[0].num, profiles[0].den
    for profile in profiles[1:]:
        num, den = ratio_max(num, den, profile.num, profile.den)
    first = profiles[0]
    return MaximalProfile(num, den, first.unit, first.f_abs, first.weights, first.measure_unit, variant="supremum")


def _lp_bound_ok(lhs: float, rhs: float) -> bool:
    return lhs <= rhs * (1 + FLOAT_TOLERANCE) + FLOAT_TOLERANCE


def doob_check(space: MetricMeasureSpace, f, filtration: Filtration, p_values: Iterable[float] = (2, 4)) -> Dict[str, Any]:
    """
    Doob's inequalities for g = sup_k |E(f | F_k)|:

        sup_v v·μ(g >= v) <= ‖f‖₁   and   ‖g‖_p <= p/(p-1)·‖f‖_p.

    A failure here is an implementation bug, logged at ERROR.
    """
    profiles = [conditional_expectation_operator(space, level)(f) for level in filtration.levels]
    g = _supremum(profiles)
    l1 = g.l1_norm
    if l1 == 0:
        return {"test": "doob", "passed": True, "weak_quantity": Fraction(0), "l1_norm": Fraction(0),
                "margin": Fraction(0), "lp": {}, "message": "✅ zero function"}
    certificate = weak_norm_witness(g)
    weak_quantity = certificate.certified_value * l1
    weak_ok = weak_quantity <= l1
    lp_results = {}
    for p in p_values:
        lhs, rhs = g.lp_norm(p), p / (p - 1) * g.f_lp_norm(p)
        lp_results[p] = {"g_norm": lhs, "bound": rhs, "passed": _lp_bound_ok(lhs, rhs)}
    passed = weak_ok and all(r["passed"] for r in lp_results.values())
    if not passed:
        logger.error("Doob inequality failed on %s: weak %s vs %s, lp %s", space.name, weak_quantity, l1, lp_results)
    return {"test": "doob", "weak_quantity": weak_quantity, "l1_norm": l1, "margin": l1 - weak_quantity,
            "lp": lp_results, "passed": passed,
            "message": f"{status_icon(passed)} sup v·μ(g >= v) = {weak_quantity} <= ‖f‖₁ = {l1}"}


# ============================================================================
# MODIFIED DOOB
# ============================================================================

def _measurable_sets(labels: np.ndarray) -> Iterable[Tuple[Tuple[int, ...], np.ndarray]]:
    """All unions of cells when there are few cells, otherwise single cells and their complements."""
    cells = np.unique(labels)
    if cells.size <= EXHAUSTIVE_CELLS:
        for size in range(1, cells.size + 1):
            for chosen in combinations(cells.tolist(), size):
                yield chosen, np.isin(labels, chosen)
    else:
        for c in cells.tolist():
            mask = labels == c
            yield (c,), mask
            yield tuple(x for x in cells.tolist() if x != c), ~mask


def _same_values(a: MaximalProfile, b: MaximalProfile) -> np.ndarray:
    left = a.num.astype(object) * b.den.astype(object) * a.unit.numerator * b.unit.denominator
    right = b.num.astype(object) * a.den.astype(object) * b.unit.numerator * a.unit.denominator
    return np.asarray(left == right, dtype=bool)


def modified_doob_check(space: MetricMeasureSpace, filtration: Filtration,
                        operators: Sequence[Callable[[Any], MaximalProfile]], f, A: Number, B: Number,
                        p: float = 1) -> Dict[str, Any]:
    """
    Check the localization hypothesis and the conclusion of the modified
    Doob inequality.

    (a) for every k and every F_k-measurable E: 1_E·M_{k+1} f = M_{k+1}(1_E f)
        pointwise (all unions of cells up to 10 cells, single cells and
        their complements above that);
    (b) sup_v v^p·μ(sup_k |M_k f| >= v) <= ((2A)^p + (2B)^p)·‖f‖_p^p.

    Returns a dict whose 'hypotheses_passed' and 'conclusion_passed' are
    reported separately; a hypothesis failure carries the witness (k, E, x).
    """
    if len(operators) != len(filtration):
        raise ValueError(f"{len(operators)} operators for a filtration with {len(filtration)} levels")
    f_ints, unit = as_integer_vector(f)
    hypothesis_witness = None
    for k in range(len(filtration) - 1):
        operator = operators[k + 1]
        full = operator(f)
        for cells, mask in _measurable_sets(filtration.levels[k]):
            restricted = operator(np.where(mask, f_ints, 0) * unit if unit != 1 else np.where(mask, f_ints, 0))
            masked = MaximalProfile(np.where(mask, full.num, 0), full.den, full.unit, full.f_abs, full.weights)
            same = _same_values(masked, restricted)
            if not same.all():
                hypothesis_witness = {"k": k, "cells": list(cells), "x": int(np.flatnonzero(~same)[0])}
                break
        if hypothesis_witness:
            break
    hypotheses_passed = hypothesis_witness is None

    g = _supremum([op(f) for op in operators])
    constant = (2 * float(A)) ** p + (2 * float(B)) ** p
    if g.l1_norm == 0:
        lhs = 0.0
        rhs = 0.0
    else:
        certificate = weak_norm_witness(g, p)
        f_norm = float(certificate.f_norm)
        lhs = float(certificate.certified_value) ** p * f_norm**p
        rhs = constant * f_norm**p
    conclusion_passed = _lp_bound_ok(lhs, rhs)
    if not hypotheses_passed:
        logger.info("Localization hypothesis fails with witness %s", hypothesis_witness)
    if not conclusion_passed:
        logger.error("Modified Doob conclusion fails: %.6g > %.6g", lhs, rhs)
    return {
        "test": "modified_doob",
        "hypotheses_passed": hypotheses_passed,
        "hypothesis_witness": hypothesis_witness,
        "conclusion_passed": conclusion_passed,
        "weak_quantity": lhs,
        "bound": rhs,
        "A": A,
        "B": B,
        "p": p,
        "passed": hypotheses_passed and conclusion_passed,
        "message": f"{status_icon(hypotheses_passed)} hypotheses; "
                   f"{status_icon(conclusion_passed)} conclusion {lhs:.6g} <= {rhs:.6g}",
    }


# ============================================================================
# LOCALIZED OPERATORS
# ============================================================================

@dataclass
class LocalizedOperator:
    """M̃ = 1_Ẽ · M_band, with Ẽ the points padded at ``pad_level``."""

    k: int
    radii: Optional[RadiiSet]
    pad_level: int
    padded: np.ndarray
    cell_labels: np.ndarray


@dataclass
class LocalizedFamily:
    """
    Localized maximal operators of one residue class i ∈ {0, 1, 2}.

    Operator k uses the radii R ∩ [2^{-(3k+i)m}, 2^{-(3k+i-1)m}]·diam and is
    cut down to the points padded at level max(0, (3k+i-2)m). The paired
    filtration is F'_k = P_{(3k+i+1)m}, levels clamped to the tree depth.
    """

    space: MetricMeasureSpace
    i: int
    m: int
    operators: List[LocalizedOperator]
    filtration: Filtration

    def apply(self, k: int, f) -> MaximalProfile:
        op = self.operators[k]
        if op.radii is None:
            f_abs, unit = integer_abs_density(self.space, f)
            n = self.space.n_points
            return MaximalProfile(np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64), unit, f_abs,
                                  self.space.weights, self.space.measure_unit, variant="localized")
        profile = maximal_profile(self.space, f, op.radii, method="bulk")
        profile.num = np.where(op.padded, profile.num, 0)
        profile.variant = "localized"
        profile._levels = None
        return profile

    def callables(self) -> List[Callable[[Any], MaximalProfile]]:
        return [lambda f, k=k: self.apply(k, f) for k in range(len(self.operators))]

    def mnf_constant(self) -> Fraction:
        """
        Exact B with M̃_k f <= B·E(|f| | P_pad)(x): the max over padded x and
        r ∈ R_k of μ(cells of P_pad meeting B(x,r)) / μ(B(x,r)).
        """
        best = Fraction(0)
        for op in self.operators:
            if op.radii is None or not op.padded.any():
                continue
            cell_measure, inverse = cell_sums(op.cell_labels, self.space.weights)
            for c in op.radii.codes:
                balls = self.space.all_ball_measures(c)
                for x in np.flatnonzero(op.padded):
                    touched = np.unique(inverse[self.space.ball_mask(int(x), c)])
                    best = max(best, Fraction(int(cell_measure[touched].sum()), int(balls[x])))
        return best

    def mana_constant(self) -> Fraction:
        """μ(X) / min μ(B(x,r)) over the radii in use; bounds every M̃_k f by A·mean|f|."""
        smallest = None
        for op in self.operators:
            if op.radii is None:
                continue
            measures = self.space.all_ball_measures(op.radii.codes[0])
            low = int(measures.min())
            smallest = low if smallest is None else min(smallest, low)
        if smallest is None:
            return Fraction(1)
        return Fraction(self.space.total_measure, smallest)


def localized_operators(space: MetricMeasureSpace, tree: PartitionTree, beta: Number, radii: RadiiSet,
                        i: int = 0) -> LocalizedFamily:
    """
    Build the localized operators of residue class ``i`` from a sampled tree.

    m is the smallest integer with 2^{-m} <= β. Operators continue until the
    band falls below the smallest distance.
    """
    if i not in (0, 1, 2):
        raise ValueError(f"Residue class i must be 0, 1 or 2, got {i}")
    m = band_exponent(beta)
    if m == 0:
        raise ValueError(f"Localization needs β < 1, got {beta}")
    diameter = to_fraction(tree.diameter)
    smallest = space.min_positive_code
    operators: List[LocalizedOperator] = []
    levels: List[np.ndarray] = []
    k = 0
    while True:
        hi_exponent = (3 * k + i - 1) * m
        lo_exponent = (3 * k + i) * m
        hi = diameter * Fraction(2) ** (-hi_exponent)
        lo = diameter * Fraction(2) ** (-lo_exponent)
        band = radii.restrict(lo, hi)
        pad_level = min(max(0, (3 * k + i - 2) * m), tree.depth)
        radius = to_fraction(beta) * diameter / 2**pad_level
        padded = padded_mask(space, tree.labels[pad_level], space.scale.code_floor(radius))
        operators.append(LocalizedOperator(k, band, pad_level, padded, tree.labels[pad_level]))
        levels.append(tree.labels[min((3 * k + i + 1) * m, tree.depth)])
        k += 1
        if smallest is None or space.scale.code_floor(lo) < smallest:
            break
    return LocalizedFamily(space, i, m, operators, Filtration(levels))


def localized_depth(space: MetricMeasureSpace, beta: Number, i: int = 0) -> int:
    """Tree depth that makes every localized level of class i available."""
    m = band_exponent(beta)
    smallest = space.min_positive_code
    if smallest is None:
        return 1
    ratio = float(space.scale.value(space.diameter_code)) / float(space.scale.value(smallest))
    k_max = max(0, math.ceil((math.log2(ratio) / m - i) / 3)) + 1
    return max(1, (3 * k_max + i + 1) * m)


# ============================================================================
# LOCALIZATION EXPERIMENT
# ============================================================================

def _default_family(space: MetricMeasureSpace, samples: int, seed: int) -> List[Tuple[np.ndarray, Dict[str, Any]]]:
    rng = make_rng(seed)
    n = space.n_points
    family = []
    for x in space.representatives()[:4]:
        f = np.zeros(n, dtype=np.int64)
        f[x] = 1
        family.append((f, {"kind": "point_mass", "point": int(x)}))
    codes = space.realized_codes()
    for _ in range(samples):
        x = int(rng.integers(n))
        c = int(rng.choice(codes))
        family.append((space.ball_mask(x, c).astype(np.int64), {"kind": "ball_indicator", "center": x, "code": c}))
    return family


def localization_experiment(space: MetricMeasureSpace, radii: RadiiSet, n: int, K: Number,
                            f_family: Optional[List[Tuple[np.ndarray, Dict[str, Any]]]] = None,
                            band_samples: int = 4, seed: int = 0, p: float = 1) -> pd.DataFrame:
    """
    Weak witnesses of M_R against the localized operators M_{R∩[r, nr]}.

    Raises:
    -------
    HypothesisViolation
        K < 5, or the space is not n-microdoubling with constant K.
    """
    if to_fraction(K) < 5:
        raise HypothesisViolation(f"Localization needs K >= 5, got {K}")
    micro = regularity_check(space, "microdoubling", {"n": n}, constant=K)
    if not micro.passed:
        raise HypothesisViolation(f"{space.name} is not {n}-microdoubling with K={K}", micro.witness)
    family = f_family if f_family is not None else _default_family(space, band_samples, seed)
    log_term = (1 + math.log(math.log(float(K))) / (1 + math.log(n))) ** (1 / p)

    rows = []
    for f, descriptor in family:
        lhs = weak_norm_witness(maximal_profile(space, f, radii), p).certified_value
        band_witnesses = []
        for r_code in radii.codes:
            r = space.scale.value(r_code)
            hi = r * n if isinstance(r, Fraction) else float(r) * n
            band = radii.restrict(r, hi)
            if band is None:
                continue
            band_witnesses.append(weak_norm_witness(maximal_profile(space, f, band), p).certified_value)
        rhs = max(band_witnesses)
        trivial_ok = all(lhs >= w for w in band_witnesses)
        if not trivial_ok:
            logger.error("Localization: M_R witness %s below a band witness for %s", lhs, descriptor)
        rows.append({
            "f": descriptor.get("kind"),
            "f_detail": descriptor,
            "lhs_witness": lhs,
            "rhs_witness": rhs,
            "ratio": float(lhs) / float(rhs) if rhs else float("inf"),
            "theorem_bound": float(K) + log_term * float(rhs),
            "trivial_direction": trivial_ok,
        })
    return pd.DataFrame(rows)


def localization_gate(space: MetricMeasureSpace, radii: RadiiSet, n: int, seed: int = 0,
                      f_family=None) -> Dict[str, Any]:
    """The trivial localization direction alone, usable on any space."""
    family = f_family if f_family is not None else _default_family(space, 2, seed)
    failures = []
    for f, descriptor in family:
        lhs = weak_norm_witness(maximal_profile(space, f, radii)).certified_value
        for r_code in radii.codes:
            r = space.scale.value(r_code)
            band = radii.restrict(r, r * n if isinstance(r, Fraction) else float(r) * n)
            if band is None:
                continue
            witness = weak_norm_witness(maximal_profile(space, f, band)).certified_value
            if witness > lhs:
                failures.append((descriptor, r_code))
    passed = not failures
    return {"test": "localization_trivial_direction", "passed": passed, "failures": failures[:5],
            "message": f"{status_icon(passed)} M_R witness dominates every band witness on {space.name}"}
