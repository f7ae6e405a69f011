"""
Randomized Vitali coverings: extended balls, intensity functions, Poisson
selection of centers and the tempered maximal inequality.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from statsmodels.stats.proportion import proportion_confint

from maxlab.maximal import maximal_profile
from maxlab.mms import FiniteMetricSpace, MetricMeasureSpace, RadiiSet
from maxlab.utils import HypothesisViolation, Number, make_rng, status_icon, to_fraction
from maxlab.validation import RegularityReport, tempered_check

logger = logging.getLogger(__name__)

LINDENSTRAUSS_CONSTANT = 2 * math.e / (math.e - 1)
MAX_LAMBDAS = 20
ALPHA_TOLERANCE = 1e-9
MOMENT_SIGMAS = 3.0


# ============================================================================
# EXTENDED BALLS AND INTENSITY
# ============================================================================

def _codes(space: MetricMeasureSpace, r_k: Number, lower_radii: Sequence[Number]) -> Tuple[int, List[int]]:
    code = space.scale.code_floor(r_k)
    lower = [space.scale.code_floor(r) for r in lower_radii]
    for r in lower_radii:
        if to_fraction(r) >= to_fraction(r_k):
            raise ValueError(f"Lower radius {r} is not below r_k = {r_k}")
    return code, lower


def extended_ball(space: MetricMeasureSpace, x: int, r_k: Number, lower_radii: Sequence[Number] = ()) -> np.ndarray:
    """B*(x) = B(x, r_k) ∪ ⋃_i B(x, r_k, r_i), as sorted indices."""
    code, lower = _codes(space, r_k, lower_radii)
    mask = space.ball_mask(x, code)
    for c in lower:
        mask = mask | space.enlarged_mask(x, code, c)
    return np.flatnonzero(mask)


def extended_ball_measures(space: MetricMeasureSpace, code: int, lower_codes: Sequence[int]) -> np.ndarray:
    """μ(B*(x)) for every x; enlarged balls grow with the inner radius."""
    if not lower_codes:
        return space.all_ball_measures(code)
    return space.all_enlarged_measures(code, max(lower_codes))


@dataclass
class Intensity:
    """
    p(x) = min_{y ∈ B(x, r_k)} 1/μ(B*(y)) on E_k, stored as the integer inverse.

    ``inverse[x]`` is 0 off E_k.
    """

    inverse: np.ndarray
    support: np.ndarray
    code: int
    lower_codes: Tuple[int, ...]
    weights: np.ndarray

    def value(self, x: int) -> Fraction:
        if not self.support[x]:
            return Fraction(0)
        return Fraction(1, int(self.inverse[x]))

    def as_float(self) -> np.ndarray:
        out = np.zeros(self.inverse.shape, dtype=np.float64)
        out[self.support] = 1.0 / self.inverse[self.support]
        return out

    @property
    def total(self) -> Fraction:
        """P = Σ_{x∈E_k} p(x)μ(x)."""
        return sum((Fraction(int(w), int(v)) for w, v in zip(self.weights[self.support], self.inverse[self.support])),
                   Fraction(0))

    def probabilities(self) -> np.ndarray:
        mass = self.as_float() * self.weights
        total = mass.sum()
        return mass / total if total > 0 else mass


def intensity(space: MetricMeasureSpace, E_k: np.ndarray, r_k: Number, lower_radii: Sequence[Number] = ()) -> Intensity:
    """Exact intensity function of the level-k selection."""
    support = np.asarray(E_k, dtype=bool)
    if not support.any():
        raise ValueError("E_k must be nonempty")
    code, lower = _codes(space, r_k, lower_radii)
    extended = extended_ball_measures(space, code, lower)
    if space.is_invariant:
        worst = np.full(space.n_points, int(extended.max()), dtype=np.int64)
    elif isinstance(space, FiniteMetricSpace):
        worst = np.where(space.codes <= code, extended[None, :], 0).max(axis=1)
    else:
        worst = np.array([int(extended[space.ball_mask(x, code)].max()) for x in range(space.n_points)])
    inverse = np.where(support, worst, 0).astype(np.int64)
    return Intensity(inverse, support, code, tuple(lower), space.weights)


def intensity_bounds_check(space: MetricMeasureSpace, table: Intensity, K: Number) -> Dict[str, Any]:
    """
    1/(K·μ(B(x, r_k))) <= p(x) on E_k, and α(y) = Σ_{x ∈ E_k ∩ B(y,r_k)} p(x)μ(x) <= 1
    for every y (floats first, exact recheck near 1).
    """
    balls = space.all_ball_measures(table.code)
    support = table.support
    lower_ok = table.inverse[support].astype(object) <= to_fraction(K) * balls[support].astype(object)
    lower_ok = bool(np.all(np.asarray(lower_ok, dtype=bool)))

    alpha = space.ball_sums(table.as_float() * space.weights, table.code)
    suspicious = np.flatnonzero(alpha > 1 - ALPHA_TOLERANCE)
    worst_alpha, witness = float(alpha.max()), None
    for y in suspicious:
        members = np.flatnonzero(space.ball_mask(int(y), table.code) & support)
        exact = sum((Fraction(int(space.weights[x]), int(table.inverse[x])) for x in members), Fraction(0))
        if exact > 1:
            witness = (int(y), exact)
            break
    passed = lower_ok and witness is None
    return {"test": "intensity_bounds", "lower_bound_passed": lower_ok, "max_alpha": worst_alpha,
            "alpha_witness": witness, "passed": passed,
            "message": f"{status_icon(passed)} p >= 1/(K·μ(B)) on E_k and max α(y) = {worst_alpha:.12g} <= 1"}


# ============================================================================
# POISSON SELECTION
# ============================================================================

@dataclass
class PoissonCoverSample:
    """A Poisson multiset Σ ⊆ E_k as (point, multiplicity) pairs."""

    k: int
    points: np.ndarray
    multiplicity: np.ndarray
    intensity: Intensity
    seed: Any = None

    @property
    def size(self) -> int:
        return int(self.multiplicity.sum())

    def counts(self, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=np.int64)
        out[self.points] = self.multiplicity
        return out

    def covered(self, space: MetricMeasureSpace) -> np.ndarray:
        """F = ∪_{x∈Σ} B(x, r_k), read off as |Σ ∩ B(y, r_k)| >= 1."""
        return space.ball_sums(self.counts(space.n_points), self.intensity.code) > 0

    def covered_explicit(self, space: MetricMeasureSpace) -> np.ndarray:
        mask = np.zeros(space.n_points, dtype=bool)
        for x in self.points:
            mask |= space.ball_mask(int(x), self.intensity.code)
        return mask

    def extended(self, space: MetricMeasureSpace) -> np.ndarray:
        """E' = ∪_{x∈Σ} B*(x)."""
        mask = np.zeros(space.n_points, dtype=bool)
        for x in self.points:
            ball = space.ball_mask(int(x), self.intensity.code)
            for c in self.intensity.lower_codes:
                ball = ball | space.enlarged_mask(int(x), self.intensity.code, c)
            mask |= ball
        return mask

    def check(self, space: MetricMeasureSpace) -> Dict[str, Any]:
        covered = self.covered(space)
        indicator_ok = bool(np.array_equal(covered, self.covered_explicit(space)))
        contains_ok = bool(np.all(self.extended(space)[covered]))
        passed = indicator_ok and contains_ok
        return {"test": "poisson_sample", "indicator_passed": indicator_ok, "extended_contains_covered": contains_ok,
                "passed": passed, "message": f"{status_icon(passed)} E' ⊇ F and 1_F matches the count rule"}


def sample_poisson(space: MetricMeasureSpace, table: Intensity, seed: Optional[int] = None,
                   rng: Optional[np.random.Generator] = None, k: int = 0) -> PoissonCoverSample:
    """N ~ Poisson(P), then N iid draws from p·μ/P on E_k."""
    rng = rng if rng is not None else make_rng(seed)
    total = float(table.total)
    count = int(rng.poisson(total)) if total > 0 else 0
    if count == 0:
        empty = np.empty(0, dtype=np.int64)
        return PoissonCoverSample(k, empty, empty, table, seed)
    draws = rng.choice(space.n_points, size=count, p=table.probabilities())
    points, multiplicity = np.unique(draws, return_counts=True)
    return PoissonCoverSample(k, points, multiplicity, table, seed)


def _batch_draws(space: MetricMeasureSpace, table: Intensity, trials: int,
                 rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """All draws of ``trials`` independent samples, with the trial id of each draw."""
    counts = rng.poisson(float(table.total), size=trials)
    draws = rng.choice(space.n_points, size=int(counts.sum()), p=table.probabilities())
    return draws, np.repeat(np.arange(trials), counts)


def poisson_moments(space: MetricMeasureSpace, table: Intensity, test_weights: Sequence[np.ndarray],
                    trials: int = 100_000, seed: int = 0) -> pd.DataFrame:
    """
    Empirical mean of Σ_{x∈Σ} w(x) against α_w = Σ w·p·μ.

    A row passes when the mean is within 3 standard errors, the variance
    of the compound Poisson sum being Σ w²·p·μ.
    """
    rng = make_rng(seed)
    draws, trial_ids = _batch_draws(space, table, trials, rng)
    p_mu = table.as_float() * space.weights
    rows = []
    for i, w in enumerate(test_weights):
        w = np.asarray(w, dtype=np.float64)
        sums = np.bincount(trial_ids, weights=w[draws], minlength=trials)
        expected = float(np.dot(w, p_mu))
        variance = float(np.dot(w**2, p_mu))
        error = MOMENT_SIGMAS * math.sqrt(variance / trials)
        mean = float(sums.mean())
        rows.append({"weight": i, "alpha_w": expected, "empirical_mean": mean, "tolerance": error,
                     "pass": abs(mean - expected) <= error + 1e-12})
    sizes = np.bincount(trial_ids, minlength=trials)
    total = float(table.total)
    rows.append({"weight": "count", "alpha_w": total, "empirical_mean": float(sizes.mean()),
                 "tolerance": MOMENT_SIGMAS * math.sqrt(stats.poisson.var(total) / trials),
                 "pass": abs(sizes.mean() - total) <= MOMENT_SIGMAS * math.sqrt(stats.poisson.var(total) / trials) + 1e-12})
    return pd.DataFrame(rows)


def coverage_probability_check(space: MetricMeasureSpace, table: Intensity, centers: Optional[Sequence[int]] = None,
                               trials: int = 20_000, seed: int = 0, alpha: float = 0.001) -> pd.DataFrame:
    """Empirical Pr[|Σ ∩ B(y, r_k)| >= 1] against 1 - e^{-α(y)}, with Wilson intervals."""
    rng = make_rng(seed)
    centers = list(centers) if centers is not None else space.representatives()[:20]
    draws, trial_ids = _batch_draws(space, table, trials, rng)
    p_mu = table.as_float() * space.weights
    rows = []
    for y in centers:
        in_ball = space.ball_mask(int(y), table.code)
        hits = np.bincount(trial_ids[in_ball[draws]], minlength=trials) > 0
        covered = int(hits.sum())
        lam = float(p_mu[in_ball].sum())
        expected = 1.0 - stats.poisson.pmf(0, lam)
        lo, hi = proportion_confint(covered, trials, alpha=alpha, method="wilson")
        rows.append({"y": int(y), "alpha_y": lam, "expected": expected, "empirical": covered / trials,
                     "wilson_lo": lo, "wilson_hi": hi, "pass": lo <= expected <= hi})
    return pd.DataFrame(rows)


# ============================================================================
# TEMPERED MAXIMAL INEQUALITY
# ============================================================================

@dataclass
class LindenstraussReport:
    """Exact μ(max_j A_{r_j}|f| > λ) against (2e/(e-1))·(K/λ)·‖f‖₁."""

    K: Number
    tempered: RegularityReport
    frame: pd.DataFrame

    @property
    def worst_ratio(self) -> float:
        if self.frame.empty:
            return 0.0
        return float(self.frame["ratio"].max())

    @property
    def passed(self) -> bool:
        return bool(self.frame["pass"].all()) if not self.frame.empty else True

    def to_dict(self) -> Dict[str, Any]:
        return {"test": "lindenstrauss", "K": self.K, "constant": LINDENSTRAUSS_CONSTANT,
                "tempered_witness": list(self.tempered.witness) if self.tempered.witness else None,
                "worst_ratio": self.worst_ratio, "passed": self.passed}


def default_lambda_grid(profile, limit: int = MAX_LAMBDAS) -> List[Fraction]:
    """Midpoints just below up to ``limit`` distinct positive values of the profile."""
    values = [v for v, _ in profile.levels() if v > 0]
    if not values:
        return [Fraction(1)]
    if len(values) > limit:
        picks = np.linspace(0, len(values) - 1, limit).round().astype(int)
        chosen = sorted(set(picks.tolist()))
    else:
        chosen = list(range(len(values)))
    grid = []
    for i in chosen:
        below = values[i + 1] if i + 1 < len(values) else Fraction(0)
        grid.append((values[i] + below) / 2)
    return grid


def _default_family(space: MetricMeasureSpace, seed: int) -> List[Tuple[np.ndarray, Dict[str, Any]]]:
    rng = make_rng(seed)
    n = space.n_points
    delta = np.zeros(n, dtype=np.int64)
    delta[space.representatives()[0]] = 1
    family = [(delta, {"kind": "point_mass", "point": int(space.representatives()[0])})]
    for i in range(3):
        indicator = (rng.random(n) < 0.1).astype(np.int64)
        if not indicator.any():
            indicator[int(rng.integers(n))] = 1
        family.append((indicator, {"kind": "random_indicator", "index": i}))
    return family


def lindenstrauss_experiment(space: MetricMeasureSpace, radii: RadiiSet, K: Optional[Number] = None,
                             f_family: Optional[List[Tuple[np.ndarray, Dict[str, Any]]]] = None,
                             lambda_grid: Optional[Sequence[Number]] = None, seed: int = 0) -> LindenstraussReport:
    """
    Check μ(max_j A_{r_j}|f| > λ) <= (2e/(e-1))·(K/λ)·‖f‖₁ exactly on the left.

    K defaults to the exact tempered constant of ``radii``.

    Raises:
    -------
    HypothesisViolation
        ``radii`` is not K-tempered; carries the tempered-check witness.
    """
    tempered = tempered_check(space, radii, K)
    if K is None:
        K = tempered.worst_ratio
    elif not tempered.passed:
        raise HypothesisViolation(f"Radii are not {K}-tempered on {space.name} (worst {tempered.worst_ratio})",
                                  tempered.witness)
    family = f_family if f_family is not None else _default_family(space, seed)

    rows = []
    for f, descriptor in family:
        profile = maximal_profile(space, f, radii)
        l1 = profile.l1_norm
        grid = [to_fraction(lam) for lam in lambda_grid] if lambda_grid is not None else default_lambda_grid(profile)
        for lam in grid:
            if lam <= 0:
                raise ValueError(f"λ must be positive, got {lam}")
            measure = profile.mass_above(lam)
            bound = LINDENSTRAUSS_CONSTANT * float(K) / float(lam) * float(l1)
            ratio = float(measure) / bound if bound > 0 else 0.0
            rows.append({"f": descriptor.get("kind"), "lambda": lam, "measure": measure, "bound": bound,
                         "ratio": ratio, "pass": float(measure) <= bound * (1 + 1e-9)})
    report = LindenstraussReport(K, tempered, pd.DataFrame(rows))
    if not report.passed:
        logger.error("Tempered maximal inequality violated on %s: worst ratio %.6g", space.name, report.worst_ratio)
    else:
        logger.info("Tempered maximal inequality on %s: worst ratio %.6g", space.name, report.worst_ratio)
    return report


def subexp_radii(space: MetricMeasureSpace, count: int, tolerance: float = 0.001) -> RadiiSet:
    """
    Greedy radii with sub-exponential growth control.

    r_1 is the smallest realized distance; r_{k+1} is the smallest realized
    distance above max(r_k, k·r_1) with
    log μ(B(x, r_{k+1} + r_k)) <= log μ(B(x, r_{k+1})) + tolerance at every
    representative x. Stops early, flagging truncation, when none is left.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    first = space.min_positive_code
    if first is None:
        return RadiiSet((0,), space.scale, truncated=True)
    grid = [int(c) for c in space.realized_codes() if c > 0]
    r1_value = space.scale.value(first)
    chosen = [first]
    truncated = False
    while len(chosen) < count:
        k = len(chosen)
        floor_code = max(chosen[-1], space.scale.code_floor(r1_value * k))
        candidate = None
        for c in grid:
            if c <= floor_code:
                continue
            reach = space.scale.add(c, chosen[-1])
            ok = True
            for x in space.representatives():
                near, far = space.ball_measures_at(x, [c, reach])
                if math.log(int(far)) > math.log(int(near)) + tolerance:
                    ok = False
                    break
            if ok:
                candidate = c
                break
        if candidate is None:
            truncated = True
            break
        chosen.append(candidate)
    logger.info("Sub-exponential radii on %s: %s%s", space.name, chosen, " (truncated)" if truncated else "")
    return RadiiSet(tuple(chosen), space.scale, truncated=truncated)
