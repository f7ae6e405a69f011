"""
Exact averaging and maximal operators and weak-norm witnesses.

A maximal profile stores M f(x) as an exact ratio ``unit * num[x] / den[x]``:
``num`` is a ball sum of |f|·μ in integer units and ``den`` a ball measure.
Weak-norm certificates are computed from the distinct profile values, so
every certified number is an exact rational for p = 1.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sympy import integer_nthroot

from maxlab.mms import GroupMetricSpace, MetricMeasureSpace, RadiiSet
from maxlab.utils import Number, as_integer_vector, check_budget, make_rng, status_icon, to_fraction

logger = logging.getLogger(__name__)

VARIANTS = ("standard", "modified")
OVERFLOW_LIMIT = 2**62


def _widen(*arrays: np.ndarray) -> List[np.ndarray]:
    """Switch to Python ints when pairwise products could overflow int64."""
    bound = 1
    for a in arrays:
        if a.dtype == object:
            return [np.asarray(x, dtype=object) for x in arrays]
        bound = max(bound, int(np.abs(a).max(initial=0)))
    if bound * bound >= OVERFLOW_LIMIT:
        return [x.astype(object) for x in arrays]
    return list(arrays)


def ratio_max(num: np.ndarray, den: np.ndarray, new_num: np.ndarray, new_den: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise max of num/den and new_num/new_den (positive denominators)."""
    num, den, new_num, new_den = _widen(num, den, new_num, new_den)
    better = np.asarray(new_num * den > num * new_den, dtype=bool)
    return np.where(better, new_num, num), np.where(better, new_den, den)


def integer_abs_density(space: MetricMeasureSpace, f: Sequence[Number]) -> Tuple[np.ndarray, Fraction]:
    """|f| as integers sharing one unit, checked against the space size."""
    ints, unit = as_integer_vector(f)
    if ints.shape != (space.n_points,):
        raise ValueError(f"f has shape {ints.shape}, space has {space.n_points} points")
    return np.abs(ints), unit


# ============================================================================
# PROFILES AND CERTIFICATES
# ============================================================================

@dataclass
class MaximalProfile:
    """
    Per-point values of a maximal operator, M f(x) = unit * num[x] / den[x].

    ``f_abs`` holds |f| in the same integer unit and ``weights`` the point
    masses in units of ``measure_unit``; together they give the norms of f.
    """

    num: np.ndarray
    den: np.ndarray
    unit: Fraction
    f_abs: np.ndarray
    weights: np.ndarray
    measure_unit: Fraction = Fraction(1)
    variant: str = "standard"
    radii: Optional[Dict[str, Any]] = None
    f_descriptor: Dict[str, Any] = field(default_factory=dict)
    _levels: Optional[List[Tuple[Fraction, int]]] = field(default=None, repr=False)

    @property
    def n_points(self) -> int:
        return int(self.num.size)

    def value(self, x: int) -> Fraction:
        return self.unit * Fraction(int(self.num[x]), int(self.den[x]))

    def values(self) -> np.ndarray:
        return float(self.unit) * self.num.astype(np.float64) / self.den.astype(np.float64)

    @property
    def l1_norm(self) -> Fraction:
        total = int(np.dot(self.f_abs.astype(object), self.weights.astype(object)))
        return self.unit * self.measure_unit * total

    def f_lp_norm(self, p: float) -> float:
        f = float(self.unit) * self.f_abs.astype(np.float64)
        w = float(self.measure_unit) * self.weights.astype(np.float64)
        if math.isinf(p):
            return float(f.max(initial=0.0))
        return float(np.sum(f**p * w) ** (1.0 / p))

    def lp_norm(self, p: float) -> float:
        values = self.values()
        w = float(self.measure_unit) * self.weights.astype(np.float64)
        if math.isinf(p):
            return float(values.max(initial=0.0))
        return float(np.sum(values**p * w) ** (1.0 / p))

    def levels(self) -> List[Tuple[Fraction, int]]:
        """Distinct values in decreasing order with the weight sitting at each."""
        if self._levels is not None:
            return self._levels
        if self.num.dtype == object or self.den.dtype == object:
            grouped: Dict[Fraction, int] = {}
            for a, b, w in zip(self.num.tolist(), self.den.tolist(), self.weights.tolist()):
                key = Fraction(int(a), int(b))
                grouped[key] = grouped.get(key, 0) + int(w)
            pairs = list(grouped.items())
        else:
            g = np.gcd(self.num, self.den)
            g[g == 0] = 1
            reduced = np.stack([self.num // g, self.den // g], axis=1)
            unique, inverse = np.unique(reduced, axis=0, return_inverse=True)
            masses = np.zeros(unique.shape[0], dtype=np.int64)
            np.add.at(masses, inverse.ravel(), self.weights)
            pairs = [(Fraction(int(a), int(b)), int(m)) for (a, b), m in zip(unique.tolist(), masses.tolist())]
        pairs.sort(key=lambda item: item[0], reverse=True)
        self._levels = [(self.unit * v, m) for v, m in pairs]
        return self._levels

    def mass_at_least(self, v: Number) -> Fraction:
        """μ(M f >= v)."""
        v = to_fraction(v)
        total = sum(m for value, m in self.levels() if value >= v)
        return self.measure_unit * total

    def mass_above(self, lam: Number) -> Fraction:
        """μ(M f > λ)."""
        lam = to_fraction(lam)
        total = sum(m for value, m in self.levels() if value > lam)
        return self.measure_unit * total

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "point": np.arange(self.n_points),
            "value": [self.value(x) for x in range(self.n_points)],
        })


@dataclass(frozen=True)
class WeakNormCertificate:
    """Witness (f, v*) for ‖M‖_{L_p -> L_p,∞} >= certified_value."""

    certified_value: Number
    threshold: Fraction
    mass: Fraction
    p: float
    f_norm: Number
    variant: str
    f_descriptor: Dict[str, Any]
    radii: Optional[Dict[str, Any]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "certified_value": self.certified_value,
            "threshold": self.threshold,
            "mass": self.mass,
            "p": self.p,
            "f_norm": self.f_norm,
            "variant": self.variant,
            "f": self.f_descriptor,
            "R": self.radii,
        }


def weak_norm_witness(profile: MaximalProfile, p: float = 1) -> WeakNormCertificate:
    """
    Best witness v* for the weak (p,p) quotient of a profile.

    For p = 1 the certified value is max over distinct profile values v of
    v·μ(Mf >= v)/‖f‖₁, which equals the supremum over λ of λ·μ(Mf > λ)/‖f‖₁
    (λ approaching each v from below). Ties go to the smallest v.

    Parameters:
    -----------
    profile : MaximalProfile
    p : float
        Exponent; p = 1 gives an exact Fraction, p > 1 a float.

    Returns:
    --------
    WeakNormCertificate
    """
    l1 = profile.l1_norm
    if l1 == 0:
        raise ValueError("Cannot certify a weak norm with the zero function")
    p = 1 if p == 1 else float(p)
    f_norm: Number = l1 if p == 1 else profile.f_lp_norm(p)

    best_value: Number = Fraction(0)
    best_threshold = Fraction(0)
    best_mass = profile.measure_unit * int(profile.weights.sum())
    cumulative = 0
    for v, m in profile.levels():
        cumulative += m
        if v <= 0:
            continue
        mass = profile.measure_unit * cumulative
        if p == 1:
            candidate: Number = v * mass / l1
        else:
            candidate = float(v) * float(mass) ** (1.0 / p) / f_norm
        if candidate >= best_value:
            best_value, best_threshold, best_mass = candidate, v, mass

    logger.debug("Weak witness %s at v=%s (mass %s)", best_value, best_threshold, best_mass)
    return WeakNormCertificate(
        certified_value=best_value,
        threshold=best_threshold,
        mass=best_mass,
        p=p,
        f_norm=f_norm,
        variant=profile.variant,
        f_descriptor=profile.f_descriptor,
        radii=profile.radii,
    )


# ============================================================================
# OPERATORS
# ============================================================================

def average(space: MetricMeasureSpace, f: Sequence[Number], x: int, r: Number) -> Fraction:
    """A_r f(x) = μ(B(x,r))^{-1} Σ_{y∈B(x,r)} |f(y)| μ(y), exact."""
    f_abs, unit = integer_abs_density(space, f)
    mask = space.ball_mask(x, space.scale.code_floor(r))
    total = int(np.dot(f_abs[mask].astype(object), space.weights[mask].astype(object)))
    return unit * Fraction(total, int(space.weights[mask].sum()))


def point_mass_support(f_abs: np.ndarray) -> Optional[int]:
    support = np.flatnonzero(f_abs)
    return int(support[0]) if support.size == 1 else None


def _describe_f(f_abs: np.ndarray, unit: Fraction, f_descriptor: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    if f_descriptor is not None:
        return dict(f_descriptor)
    support = np.flatnonzero(f_abs)
    if support.size == 1:
        return {"kind": "point_mass", "point": int(support[0]), "value": unit * int(f_abs[support[0]])}
    return {"kind": "array", "support_size": int(support.size)}


def maximal_profile(space: MetricMeasureSpace, f: Sequence[Number], radii: RadiiSet,
                    variant: str = "standard", method: str = "auto",
                    budget: Optional[int] = None,
                    f_descriptor: Optional[Dict[str, Any]] = None) -> MaximalProfile:
    """
    Exact M_R f over a finite set of radii.

    Parameters:
    -----------
    space : MetricMeasureSpace
    f : array-like
        Function values (rational).
    radii : RadiiSet
        Radii R, as codes of ``space.scale``.
    variant : str
        'standard' (ball denominator) or 'modified' (denominator μ(B(x,r,r))).
    method : str
        'auto', 'bulk' (FFT or matrix ball sums), 'naive' (per-point sort) or
        'delta' (point mass on an invariant space).
    budget : int, optional
        Work budget (see ``utils.resolve_budget``).

    Returns:
    --------
    MaximalProfile
    """
    if variant not in VARIANTS:
        raise ValueError(f"Unknown variant {variant!r}; expected one of {VARIANTS}")
    f_abs, unit = integer_abs_density(space, f)
    descriptor = _describe_f(f_abs, unit, f_descriptor)
    codes = list(radii.codes)
    delta_point = point_mass_support(f_abs)
    delta_ok = delta_point is not None and space.is_invariant and variant == "standard"

    if method == "auto":
        if delta_ok:
            method = "delta"
        else:
            method = "bulk"
    logger.info("Maximal profile on %s: variant=%s method=%s |R|=%d", space.name, variant, method, len(codes))

    if method == "delta":
        if not delta_ok:
            raise ValueError("delta method needs a point mass on an invariant space (standard variant)")
        num, den = _delta_profile(space, f_abs, delta_point, codes)
    elif method == "bulk":
        n = space.n_points
        if isinstance(space, GroupMetricSpace):
            cost = len(codes) * n * max(1.0, math.log2(n))
        else:
            cost = len(codes) * float(n) ** 2
        if variant == "modified" and not isinstance(space, GroupMetricSpace):
            cost += len(codes) * float(n) ** 3
        hint = None
        if delta_point is not None and space.is_invariant:
            hint = "f is a point mass on an invariant space: use method='delta'"
        check_budget(cost, f"maximal profile on {space.name}", budget, hint=hint)
        num, den = _bulk_profile(space, f_abs, codes, variant)
    elif method == "naive":
        check_budget(float(space.n_points) ** 2 * max(1, len(codes)), f"naive profile on {space.name}", budget)
        num, den = _naive_profile(space, f_abs, codes, variant)
    else:
        raise ValueError(f"Unknown method {method!r}")

    return MaximalProfile(
        num=num, den=den, unit=unit, f_abs=f_abs, weights=space.weights,
        measure_unit=space.measure_unit, variant=variant,
        radii=radii.describe(), f_descriptor=descriptor,
    )


def _bulk_profile(space, f_abs, codes, variant):
    n = space.n_points
    num = np.zeros(n, dtype=np.int64)
    den = np.ones(n, dtype=np.int64)
    mass = f_abs * space.weights
    for c in codes:
        sums = space.ball_sums(mass, c)
        if variant == "standard":
            measures = space.all_ball_measures(c)
        else:
            measures = space.all_enlarged_measures(c, c)
        num, den = ratio_max(num, den, np.asarray(sums), np.asarray(measures, dtype=np.int64))
    return num, den


def _naive_profile(space, f_abs, codes, variant):
    """Independent per-point evaluation; the oracle for the bulk paths."""
    n = space.n_points
    num = np.zeros(n, dtype=object)
    den = np.ones(n, dtype=object)
    mass = (f_abs * space.weights).astype(object)
    for x in range(n):
        dists = space.distances_from(x)
        for c in codes:
            inside = dists <= c
            s = int(mass[inside].sum()) if inside.any() else 0
            if variant == "standard":
                d = int(space.weights[inside].sum())
            else:
                d = int(space.weights[space.enlarged_mask(x, c, c)].sum())
            if s * den[x] > num[x] * d:
                num[x], den[x] = s, d
    return num, den


def _delta_profile(space, f_abs, g, codes):
    """M_R(c·δ_g)(x) = c·μ(g) / μ(B(0, r)) for the smallest r in R with d(x,g) <= r."""
    codes = np.asarray(codes, dtype=np.int64)
    measures = space.ball_measures_at(0, codes).astype(np.int64)
    dists = space.distances_from(g)
    idx = np.searchsorted(codes, dists, side="left")
    inside = idx < codes.size
    top = int(f_abs[g]) * int(space.weights[g])
    num = np.where(inside, top, 0).astype(np.int64)
    den = np.where(inside, measures[np.minimum(idx, codes.size - 1)], 1).astype(np.int64)
    return num, den


# ============================================================================
# RADII
# ============================================================================

def lacunary_radii(space: MetricMeasureSpace, epsilon: Optional[Number] = None,
                   shift: Optional[Number] = None) -> RadiiSet:
    """
    Dyadic radii 2^j from just below the smallest distance up to the diameter.

    ``epsilon`` dilates each radius to (1+ε)2^j; ``shift`` adds a constant
    (one fixed-point quantum gives the ε-dilated operator of the doubling example).
    """
    lo_code = space.min_positive_code
    if lo_code is None:
        return RadiiSet((0,), space.scale)
    lo = float(space.scale.value(lo_code))
    hi = float(space.scale.value(space.diameter_code))
    j_lo = math.floor(math.log2(lo)) - 1
    j_hi = math.ceil(math.log2(hi))
    values = []
    for j in range(j_lo, j_hi + 1):
        v: Number = Fraction(2) ** j
        if epsilon is not None:
            v = v * (1 + to_fraction(epsilon))
        if shift is not None:
            v = v + to_fraction(shift)
        values.append(v)
    return RadiiSet.from_values(space.scale, values)


def geometric_radii(space: MetricMeasureSpace, ratio: Number, start: Optional[Number] = None) -> RadiiSet:
    """Radii start·ratio^j up to the diameter; ``start`` defaults to the smallest distance."""
    if to_fraction(ratio) <= 1:
        raise ValueError(f"ratio must be > 1, got {ratio}")
    lo_code = space.min_positive_code
    if lo_code is None:
        return RadiiSet((0,), space.scale)
    value = to_fraction(start) if start is not None else to_fraction(space.scale.value(lo_code))
    top = float(space.scale.value(space.diameter_code))
    values = []
    while float(value) <= top * (1 + 1e-12):
        values.append(value)
        value = value * to_fraction(ratio)
    return RadiiSet.from_values(space.scale, values)


@dataclass(frozen=True)
class RadiiBand:
    index: int
    lo: Number
    hi: Number
    radii: Optional[RadiiSet]

    @property
    def ratio(self) -> float:
        return float(self.hi) / float(self.lo)


def _exact_root_power(n: int, j: int, m: int) -> Number:
    """n^{j/m}, exact when it is an integer."""
    root, exact = integer_nthroot(n**j, m)
    if exact:
        return Fraction(int(root))
    return float(n) ** (j / m)


def radii_bands(radii: RadiiSet, r_lo: Number, n: int, m: int, disjoint: bool = False) -> List[RadiiBand]:
    """
    Split R ∩ [r_lo, ∞) into bands R ∩ [r·n^{j/m}, r·n^{(j+1)/m}], j = 0, 1, ...

    Bands are closed, so a radius on a boundary sits in both neighbours;
    with ``disjoint=True`` it goes to the lower band only.
    """
    if n <= 1:
        raise ValueError(f"n must be > 1, got {n}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    r_lo = to_fraction(r_lo) if not isinstance(r_lo, float) else r_lo
    values = radii.values()
    top = max(float(v) for v in values)
    bands: List[RadiiBand] = []
    taken: set = set()
    j = 0
    while True:
        lo = r_lo * _exact_root_power(n, j, m)
        hi = r_lo * _exact_root_power(n, j + 1, m)
        band = radii.restrict(lo, hi)
        if band is not None and disjoint:
            kept = [c for c in band.codes if c not in taken]
            band = band.subset(kept) if kept else None
        if band is not None:
            taken.update(band.codes)
        bands.append(RadiiBand(j, lo, hi, band))
        if float(hi) >= top * (1 - 1e-12):
            break
        j += 1
    return bands


def band_ratio_bound(n: int, m: int) -> Dict[str, Any]:
    """n^{1/m} against 1 + 1/n (holds once m >= 2 n log n)."""
    ratio = float(n) ** (1.0 / m)
    return {"n": n, "m": m, "band_ratio": ratio, "bound": 1 + 1 / n, "passed": ratio <= 1 + 1 / n}


# ============================================================================
# ESTIMATES AND INEQUALITY CHECKS
# ============================================================================

def strong_norm_estimate(space: MetricMeasureSpace, operator: Callable[[np.ndarray], MaximalProfile],
                         p: float, trials: int, seed: int = 0) -> Dict[str, Any]:
    """
    Lower-bound estimate of ‖M‖_{L_p -> L_p} by a random trial family.

    Trial functions: the constant 1, point masses, indicators of random
    balls and random ±1 fields. The result is the best ‖Mf‖_p/‖f‖_p seen
    and is only ever a LOWER BOUND.
    """
    if p <= 1:
        raise ValueError(f"p must be > 1, got {p}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = make_rng(seed)
    n = space.n_points
    realized = space.realized_codes()

    def trial_function(i: int) -> Tuple[np.ndarray, Dict[str, Any]]:
        if i == 0:
            return np.ones(n, dtype=np.int64), {"kind": "constant"}
        kind = i % 3
        if kind == 1:
            g = int(rng.integers(n))
            f = np.zeros(n, dtype=np.int64)
            f[g] = 1
            return f, {"kind": "point_mass", "point": g}
        if kind == 2:
            x = int(rng.integers(n))
            c = int(rng.choice(realized))
            return space.ball_mask(x, c).astype(np.int64), {"kind": "ball_indicator", "center": x, "code": c}
        return rng.choice(np.array([-1, 1]), size=n), {"kind": "random_sign"}

    best = {"ratio": 0.0, "trial": None}
    for i in range(trials):
        f, descriptor = trial_function(i)
        profile = operator(f)
        denominator = profile.f_lp_norm(p)
        if denominator == 0:
            continue
        ratio = profile.lp_norm(p) / denominator
        if ratio > best["ratio"]:
            best = {"ratio": ratio, "trial": descriptor}
    logger.info("Strong (%s,%s) lower bound %.6g over %d trials", p, p, best["ratio"], trials)
    return {"label": "LOWER BOUND", "p": p, "trials": trials, "seed": seed,
            "lower_bound": best["ratio"], "best_trial": best["trial"]}


def modified_weak_bound_check(space: MetricMeasureSpace, f: Sequence[Number], radii: RadiiSet,
                              K: Optional[Number] = None) -> Dict[str, Any]:
    """
    Weak (1,1) witnesses of the modified and standard operators.

    The modified operator (enlarged-ball denominator) has weak norm <= 1 on
    every space; the standard one has weak norm <= K on a K-doubling space.
    K defaults to the exact doubling constant of the space.
    """
    from maxlab.validation import regularity_check

    if K is None:
        K = regularity_check(space, "doubling").worst_ratio
    modified = weak_norm_witness(maximal_profile(space, f, radii, variant="modified"))
    standard = weak_norm_witness(maximal_profile(space, f, radii, variant="standard"))
    passed_modified = modified.certified_value <= 1
    passed_standard = standard.certified_value <= K
    return {
        "test": "modified_weak_bound",
        "modified_witness": modified.certified_value,
        "standard_witness": standard.certified_value,
        "doubling_constant": K,
        "passed": passed_modified and passed_standard,
        "message": f"{status_icon(passed_modified)} modified {modified.certified_value} <= 1; "
                   f"{status_icon(passed_standard)} standard {standard.certified_value} <= K={K}",
    }


def sparsification_check(space: MetricMeasureSpace, f: Sequence[Number], radii: RadiiSet,
                         r: Number, n: int, m: int, lam: Number) -> Dict[str, Any]:
    """μ(M_{R∩[r,nr]} f > λ) <= m · max over bands of μ(M_band f > λ)."""
    window = radii.restrict(r, to_fraction(r) * n if not isinstance(r, float) else r * n)
    if window is None:
        return {"test": "sparsification", "passed": True, "lhs": Fraction(0), "rhs": Fraction(0),
                "message": "✅ no radii in [r, nr]"}
    lhs = maximal_profile(space, f, window).mass_above(lam)
    band_masses = []
    for band in radii_bands(window, r, n, m):
        if band.radii is None:
            continue
        band_masses.append(maximal_profile(space, f, band.radii).mass_above(lam))
    rhs = m * max(band_masses, default=Fraction(0))
    passed = lhs <= rhs
    if not passed:
        logger.warning("Sparsification inequality failed: %s > %s", lhs, rhs)
    return {"test": "sparsification", "lhs": lhs, "rhs": rhs, "bands": len(band_masses), "passed": passed,
            "message": f"{status_icon(passed)} μ(M f > λ) = {lhs} <= m·max band = {rhs}"}


def averaging_domination_check(space: MetricMeasureSpace, f: Sequence[Number], radii: RadiiSet,
                               r: Number, n: int, K: Optional[Number] = None) -> Dict[str, Any]:
    """Pointwise M_{R∩[r,(1+1/n)r]} f <= K · A_{(1+1/n)r} f on an n-microdoubling space."""
    from maxlab.validation import regularity_check

    if K is None:
        K = regularity_check(space, "microdoubling", {"n": n}).worst_ratio
    K = to_fraction(K)
    r_top = to_fraction(r) * Fraction(n + 1, n) if not isinstance(r, float) else r * (n + 1) / n
    window = radii.restrict(r, r_top)
    if window is None:
        return {"test": "averaging_domination", "passed": True, "worst_excess": None,
                "message": "✅ no radii in the window"}
    lhs = maximal_profile(space, f, window)
    top = RadiiSet((space.scale.code_floor(r_top),), space.scale)
    rhs = maximal_profile(space, f, top)
    lhs_num, lhs_den, rhs_num, rhs_den = (a.astype(object) for a in (lhs.num, lhs.den, rhs.num, rhs.den))
    k_num, k_den = K.numerator, K.denominator
    ok = np.asarray(lhs_num * rhs_den * k_den <= k_num * rhs_num * lhs_den, dtype=bool)
    passed = bool(np.all(ok))
    witness = None if passed else int(np.flatnonzero(~ok)[0])
    return {"test": "averaging_domination", "K": K, "passed": passed, "witness": witness,
            "message": f"{status_icon(passed)} M_window f <= {K}·A f pointwise"}


def single_radius_contraction(space: MetricMeasureSpace, f: Sequence[Number], r: Number) -> Dict[str, Any]:
    """
    ‖A_r f‖₁ <= K‖f‖₁ with K = max μ(B(y,r))/μ(B(x,r)) over d(x,y) <= r.

    K is 1 on invariant spaces. The weak (1,1) witness of A_r is held to the
    same K, so it is at most 1 when the space is invariant.
    """
    code = space.scale.code_floor(r)
    profile = maximal_profile(space, f, RadiiSet((code,), space.scale))
    norm_af = profile.measure_unit * profile.unit * sum(
        Fraction(int(a) * int(w), int(b)) for a, b, w in zip(profile.num, profile.den, space.weights))
    if space.is_invariant:
        K = Fraction(1)
    else:
        measures = space.all_ball_measures(code)
        K = Fraction(1)
        for x in range(space.n_points):
            inside = space.ball_mask(x, code)
            K = max(K, Fraction(int(measures[inside].max()), int(measures[x])))
    l1 = profile.l1_norm
    weak = weak_norm_witness(profile).certified_value if l1 > 0 else Fraction(0)
    passed = norm_af <= K * l1 and weak <= K
    return {"test": "single_radius_contraction", "average_l1": norm_af, "f_l1": l1, "K": K,
            "weak_witness": weak, "passed": passed,
            "message": f"{status_icon(passed)} ‖A_r f‖₁ = {norm_af} <= {K}·{l1}, weak witness {weak} <= {K}"}


def lifted_lower_bound_check(product, f_q: Sequence[Number]) -> Dict[str, Any]:
    """
    Lift f_q from X_q to the doubling example, f(u, v) = f_q(u), and check

        M_lac f(u, v) >= (1/6) · max_j A_{E_j} f_q(u)

    pointwise, where M_lac is the lacunary operator dilated by one fixed-point
    quantum and j runs over the levels whose set E_j lies in the level-set
    size window. The weak witness inequality that follows is checked too.
    """
    level_space = product.level_space
    f_abs, unit = as_integer_vector(np.abs(np.asarray(f_q)))
    if f_abs.shape != (level_space.n_points,):
        raise ValueError(f"f_q has shape {f_abs.shape}, X_q has {level_space.n_points} points")
    lifted = np.repeat(f_abs, product.fiber_size)
    radii = lacunary_radii(product, shift=product.quantum)
    profile = maximal_profile(product, lifted, radii, method="bulk")

    window = level_space.level_window()
    num = np.zeros(level_space.n_points, dtype=np.int64)
    den = np.ones(level_space.n_points, dtype=np.int64)
    used = []
    for j in range(1, product.t + 1):
        z = product.level_of_index(j)
        size = level_space.level_size(z)
        if size == 0 or not window[z]:
            continue
        used.append(j)
        sums = level_space.level_sums(f_abs, z)
        num, den = ratio_max(num, den, sums, np.full(level_space.n_points, size, dtype=np.int64))

    lhs_num, lhs_den = profile.num, profile.den
    rhs_num = np.repeat(num, product.fiber_size)
    rhs_den = np.repeat(den, product.fiber_size) * 6
    a, b, c, d = _widen(lhs_num, lhs_den, rhs_num, rhs_den)
    ok = np.asarray(a * d >= c * b, dtype=bool)
    passed = bool(np.all(ok))

    mq_profile = MaximalProfile(num=num, den=den, unit=unit, f_abs=f_abs,
                                weights=np.ones(level_space.n_points, dtype=np.int64), variant="mq")
    lifted_witness = weak_norm_witness(profile).certified_value if profile.l1_norm else Fraction(0)
    mq_witness = weak_norm_witness(mq_profile).certified_value if mq_profile.l1_norm and used else Fraction(0)
    induced = mq_witness / 6
    witness_ok = lifted_witness >= induced
    if not passed:
        logger.warning("Lifted bound fails at point %d", int(np.flatnonzero(~ok)[0]))
    return {
        "test": "lifted_lower_bound",
        "levels_used": used,
        "pointwise_passed": passed,
        "lifted_witness": lifted_witness,
        "induced_bound": induced,
        "passed": passed and witness_ok,
        "message": f"{status_icon(passed and witness_ok)} lifted witness {lifted_witness} >= {induced}",
    }
