"""
Regularity and structural checks for metric measure spaces.

Implements:
1. Triangle inequality (exhaustive up to a size limit, sampled above it)
2. Ball monotonicity and the enlarged-ball sandwich
3. Invariance of ball measures on group spaces
4. Doubling, microdoubling, strong microdoubling and Ahlfors-David growth
5. Tempered radii sequences

Regularity suprema are exact: μ(B(x,·)) only jumps at realized distances,
so every check runs over the step intervals [d_i, d_{i+1}) of each center.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from maxlab.mms import FiniteMetricSpace, GroupMetricSpace, MetricMeasureSpace, RadiiSet
from maxlab.utils import Number, check_budget, make_rng, status_icon, to_fraction

logger = logging.getLogger(__name__)

KINDS = ("doubling", "microdoubling", "strong-microdoubling", "AD")


@dataclass
class RegularityReport:
    """Extremal ratio of a regularity condition and the point where it is attained."""

    kind: str
    params: Dict[str, Any]
    worst_ratio: Number
    witness: Optional[Tuple]
    passed: Optional[bool]
    constant: Optional[Number] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "params": self.params, "worst_ratio": self.worst_ratio,
                "witness": list(self.witness) if self.witness else None, "passed": self.passed,
                "constant": self.constant, "message": self.message, **self.details}

    @property
    def message(self) -> str:
        if self.passed is None:
            return f"{self.kind}: worst ratio {self.worst_ratio} at {self.witness}"
        return (f"{status_icon(self.passed)} {self.kind}: worst ratio {self.worst_ratio} "
                f"vs constant {self.constant} at {self.witness}")


def _verdict(worst: Number, constant: Optional[Number]) -> Optional[bool]:
    if constant is None:
        return None
    return bool(worst <= to_fraction(constant)) if isinstance(worst, Fraction) else bool(worst <= float(constant))


def _ratio(a: int, b: int) -> Fraction:
    return Fraction(int(a), int(b))


def regularity_check(space: MetricMeasureSpace, kind: str, params: Optional[Dict[str, Any]] = None,
                     constant: Optional[Number] = None, budget: Optional[int] = None) -> RegularityReport:
    """
    Exact supremum of a regularity ratio over all centers and radii.

    Parameters:
    -----------
    space : MetricMeasureSpace
    kind : str
        'doubling' (μ(B(x,2r)) / μ(B(x,r))), 'microdoubling' (dilation 1+1/n),
        'strong-microdoubling' (recentered at y ∈ B(x,r)) or 'AD'.
    params : dict
        'n' for the microdoubling kinds; for 'AD': 'n', 'c' (lower constant,
        default 1), 'unit' (measure normalizer, default 1) and optional
        'radius_codes' = (lo, hi) limiting the radius range.
    constant : number, optional
        K (or C for 'AD'); the report passes iff the worst ratio is <= constant.

    Returns:
    --------
    RegularityReport
        The witness is (x, r) or (x, r, y); r is a radius value attaining the ratio.
    """
    params = dict(params or {})
    if kind not in KINDS:
        raise ValueError(f"Unknown regularity kind {kind!r}; expected one of {KINDS}")
    if kind == "AD":
        return _ad_check(space, params, constant)
    if kind == "doubling":
        factor = Fraction(2)
    else:
        n = params.get("n")
        if n is None or int(n) != n or n < 1:
            raise ValueError(f"{kind} needs an integer n >= 1, got {n}")
        factor = 1 + Fraction(1, int(n))

    scale = space.scale
    strong = kind == "strong-microdoubling" and not space.is_invariant
    if strong:
        check_budget(float(space.n_points) ** 2 * len(space.realized_codes()), f"strong microdoubling on {space.name}",
                     budget)
    all_measures: Dict[int, np.ndarray] = {}

    worst, witness = Fraction(1), None
    for x in space.representatives():
        codes, measures = space.ball_profile(x)
        for i in range(len(codes) - 1):
            top = scale.dilate(int(codes[i + 1]), factor, strict=True)
            r_star = _witness_radius(scale, int(codes[i]), top, factor)
            if strong:
                if top not in all_measures:
                    all_measures[top] = space.all_ball_measures(top)
                inside = space.ball_indices(x, int(codes[i]))
                k = int(np.argmax(all_measures[top][inside]))
                y = int(inside[k])
                ratio = _ratio(all_measures[top][y], measures[i])
                candidate = (x, r_star, y)
            else:
                ratio = _ratio(space.ball_measures_at(x, [top])[0], measures[i])
                candidate = (x, r_star)
            if ratio > worst:
                worst, witness = ratio, candidate
    if witness is None:
        x0 = space.representatives()[0]
        witness = (x0, Fraction(0)) if not strong else (x0, Fraction(0), x0)
    report = RegularityReport(kind, {"n": params.get("n")} if kind != "doubling" else {}, worst, witness,
                              _verdict(worst, constant), constant)
    logger.info(report.message)
    return report


def _witness_radius(scale, lo_code: int, top_code: int, factor: Fraction) -> Number:
    """A radius r in [d_lo, d_next) with B(x, factor·r) = B(x, top)."""
    lo = scale.value(lo_code)
    reach = scale.value(max(top_code, 0))
    candidate = reach / factor if isinstance(reach, Fraction) else float(reach) / float(factor)
    if isinstance(lo, Fraction) and isinstance(candidate, Fraction):
        return max(lo, candidate)
    return max(float(lo), float(candidate))


def _ad_check(space: MetricMeasureSpace, params: Dict[str, Any], constant: Optional[Number]) -> RegularityReport:
    """c·r^n <= μ(B(x,r))/unit <= C·r^n on the radius range."""
    n = params.get("n")
    if n is None or int(n) != n or n < 1:
        raise ValueError(f"AD check needs an integer n >= 1, got {n}")
    n = int(n)
    lower_constant = to_fraction(params.get("c", 1))
    unit = to_fraction(params.get("unit", 1))
    scale = space.scale
    lo_default = space.min_positive_code or 0
    lo_code, hi_code = params.get("radius_codes", (lo_default, space.diameter_code))

    upper, upper_witness = Fraction(0), None
    lower, lower_witness = None, None
    for x in space.representatives():
        codes, measures = space.ball_profile(x)
        for i in range(len(codes)):
            start = max(int(codes[i]), lo_code)
            if i + 1 < len(codes) and start >= int(codes[i + 1]):
                continue
            stop = min(int(codes[i + 1]), hi_code) if i + 1 < len(codes) else hi_code
            if start > stop or start == 0:
                continue
            mass = Fraction(int(measures[i])) / unit
            up = mass / to_fraction(scale.power(start, n))
            if up > upper:
                upper, upper_witness = up, (x, scale.value(start))
            low = mass / to_fraction(scale.power(stop, n))
            if lower is None or low < lower:
                lower, lower_witness = low, (x, scale.value(stop))
    lower = lower if lower is not None else Fraction(1)
    passed_upper = _verdict(upper, constant)
    passed_lower = lower >= lower_constant
    passed = passed_lower if passed_upper is None else (passed_upper and passed_lower)
    report = RegularityReport(
        "AD", {"n": n, "c": lower_constant, "unit": unit}, upper, upper_witness, passed, constant,
        details={"lower_ratio": lower, "lower_witness": list(lower_witness) if lower_witness else None,
                 "lower_constant": lower_constant},
    )
    logger.info("%s (lower ratio %s vs %s)", report.message, lower, lower_constant)
    return report


def tempered_check(space: MetricMeasureSpace, radii: RadiiSet, K: Optional[Number] = None) -> RegularityReport:
    """
    max over j, x and y ∈ B(x, r_j) of μ(B(x,r_j) ∪ ⋃_{i<j} B(x,r_j,r_i)) / μ(B(y, r_j)).

    Enlarged balls grow with the inner radius, so the union is B(x, r_j, r_{j-1}).
    """
    worst, witness = Fraction(0), None
    codes = list(radii.codes)
    for j, c in enumerate(codes):
        balls = space.all_ball_measures(c)
        if j == 0:
            tops = balls
        else:
            tops = space.all_enlarged_measures(c, codes[j - 1])
        for x in space.representatives():
            inside = space.ball_indices(x, c)
            k = int(np.argmin(balls[inside]))
            ratio = _ratio(tops[x], balls[inside][k])
            if ratio > worst:
                worst, witness = ratio, (x, space.scale.value(c), int(inside[k]))
    report = RegularityReport("tempered", {"radii": radii.describe()}, worst, witness, _verdict(worst, K), K)
    logger.info(report.message)
    return report


# ============================================================================
# STRUCTURAL VALIDATOR
# ============================================================================

class SpaceValidator:
    """
    Structural checks on constructed spaces.

    Parameters:
    -----------
    exhaustive_limit : int
        Spaces with at most this many points get exhaustive O(n³) checks.
    sample_pairs : int
        Random triples for sampled checks on larger spaces.
    seed : int
        Seed for every sampled check.
    """

    def __init__(self, exhaustive_limit: int = 500, sample_pairs: int = 10**6, seed: int = 0):
        self.exhaustive_limit = exhaustive_limit
        self.sample_pairs = sample_pairs
        self.seed = seed

    @staticmethod
    def _pair_codes(space: MetricMeasureSpace, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        if isinstance(space, FiniteMetricSpace):
            return space.codes[xs, ys]
        if isinstance(space, GroupMetricSpace):
            return space.norm_codes[space.subtract(xs, ys)]
        return np.array([space.distance(int(a), int(b)) for a, b in zip(xs, ys)], dtype=np.int64)

    def triangle_inequality_check(self, space: MetricMeasureSpace) -> Dict[str, Any]:
        """d(x,z) <= d(x,y) + d(y,z), compared as codes: d(x,z) <= add(d(x,y), d(y,z))."""
        n = space.n_points
        scale = space.scale
        witness = None
        if isinstance(space, GroupMetricSpace) and float(n) ** 2 <= float(self.exhaustive_limit) ** 3:
            # invariant metric: N(a + b) <= N(a) + N(b) over all pairs
            mode = "exhaustive"
            norm = space.norm_codes
            for a in range(n):
                sums = space.add(np.full(n, a), np.arange(n))
                bad = norm[sums] > scale.add_array(np.full(n, norm[a]), norm)
                if bad.any():
                    b = int(np.flatnonzero(bad)[0])
                    witness = (int(space.add(a, b)), b, 0)
                    break
        elif n <= self.exhaustive_limit:
            mode = "exhaustive"
            matrix = np.stack([space.distances_from(x) for x in range(n)])
            for y in range(n):
                bound = scale.add_array(matrix[:, y][:, None], matrix[y, :][None, :])
                bad = matrix > bound
                if bad.any():
                    x, z = (int(v) for v in np.argwhere(bad)[0])
                    witness = (x, y, z)
                    break
        else:
            mode = "sampled"
            rng = make_rng(self.seed)
            xs, ys, zs = (rng.integers(n, size=self.sample_pairs) for _ in range(3))
            dxz = self._pair_codes(space, xs, zs)
            bound = scale.add_array(self._pair_codes(space, xs, ys), self._pair_codes(space, ys, zs))
            bad = np.flatnonzero(dxz > bound)
            if bad.size:
                k = int(bad[0])
                witness = (int(xs[k]), int(ys[k]), int(zs[k]))
        passed = witness is None
        return {"test": "triangle_inequality", "mode": mode, "passed": passed, "witness": witness,
                "message": f"{status_icon(passed)} triangle inequality ({mode})"
                           + ("" if passed else f" fails at {witness}")}

    def ball_monotonicity_check(self, space: MetricMeasureSpace, samples: int = 200) -> Dict[str, Any]:
        """B(x,r) ⊆ B(x,r') for r <= r' at random centers and radii."""
        rng = make_rng(self.seed)
        codes = space.realized_codes()
        failures = 0
        for _ in range(samples):
            x = int(rng.integers(space.n_points))
            r, r2 = sorted(int(c) for c in rng.choice(codes, size=2))
            if np.any(space.ball_mask(x, r) & ~space.ball_mask(x, r2)):
                failures += 1
        passed = failures == 0
        return {"test": "ball_monotonicity", "samples": samples, "failures": failures, "passed": passed,
                "message": f"{status_icon(passed)} ball monotonicity ({samples} samples)"}

    def enlarged_sandwich_check(self, space: MetricMeasureSpace, samples: int = 50) -> Dict[str, Any]:
        """B(x,r) ⊆ B(x,r,r') ⊆ B(x,r+r')."""
        rng = make_rng(self.seed)
        codes = space.realized_codes()
        failures = []
        for _ in range(samples):
            x = int(rng.integers(space.n_points))
            r, r2 = (int(c) for c in rng.choice(codes, size=2))
            inner = space.ball_mask(x, r)
            middle = space.enlarged_mask(x, r, r2)
            outer = space.ball_mask(x, space.scale.add(r, r2))
            if np.any(inner & ~middle) or np.any(middle & ~outer):
                failures.append((x, r, r2))
        passed = not failures
        return {"test": "enlarged_sandwich", "samples": samples, "failures": failures[:5], "passed": passed,
                "message": f"{status_icon(passed)} B(x,r) ⊆ B(x,r,r') ⊆ B(x,r+r') ({samples} samples)"}

    def invariance_check(self, space: GroupMetricSpace, centers: int = 20, triples: int = 10**5) -> Dict[str, Any]:
        """Ball profiles agree across centers and d(x+z, y+z) = d(x, y) on random triples."""
        rng = make_rng(self.seed)
        reference = space.ball_profile(0)
        profiles_ok = True
        for x in rng.integers(space.n_points, size=centers):
            codes, measures = MetricMeasureSpace.ball_profile(space, int(x))
            if not (np.array_equal(codes, reference[0]) and np.array_equal(measures, reference[1])):
                profiles_ok = False
                break
        xs, ys, zs = (rng.integers(space.n_points, size=triples) for _ in range(3))
        direct = space.norm_codes[space.subtract(xs, ys)]
        shifted = space.norm_codes[space.subtract(space.add(xs, zs), space.add(ys, zs))]
        translation_ok = bool(np.array_equal(direct, shifted))
        passed = profiles_ok and translation_ok
        return {"test": "invariance", "profiles_equal": profiles_ok, "translation_invariant": translation_ok,
                "triples": triples, "passed": passed,
                "message": f"{status_icon(passed)} invariance ({centers} centers, {triples:,} triples)"}

    def run_all_validations(self, space: MetricMeasureSpace, regularity: Optional[List[Dict[str, Any]]] = None,
                            verbose: bool = True) -> Dict[str, Any]:
        """
        Run the structural battery plus the requested regularity checks.

        Parameters:
        -----------
        regularity : list of dict
            Entries {'kind': ..., 'params': {...}, 'constant': ...}.

        Returns:
        --------
        dict
            Check name -> result dict, plus 'all_passed'.
        """
        results: Dict[str, Any] = {}
        if verbose:
            print("=" * 80)
            print(f"VALIDATING SPACE: {space.name} ({space.n_points:,} points)")
            print("=" * 80)

        sections = [
            ("Triangle Inequality", "triangle_inequality", lambda: self.triangle_inequality_check(space)),
            ("Ball Monotonicity", "ball_monotonicity", lambda: self.ball_monotonicity_check(space)),
            ("Enlarged Ball Sandwich", "enlarged_sandwich", lambda: self.enlarged_sandwich_check(space)),
        ]
        if isinstance(space, GroupMetricSpace):
            sections.append(("Invariance", "invariance", lambda: self.invariance_check(space)))
        for entry in regularity or []:
            kind = entry["kind"]
            sections.append((f"Regularity: {kind}", kind,
                             lambda entry=entry: regularity_check(space, entry["kind"], entry.get("params"),
                                                                  entry.get("constant")).to_dict()))

        for i, (title, key, run) in enumerate(sections, start=1):
            result = run()
            results[key] = result
            if verbose:
                print(f"\n{i}. {title}")
                print("-" * 80)
                print(result["message"])

        all_passed = all(r["passed"] is not False for r in results.values())
        results["all_passed"] = all_passed
        if verbose:
            print("\n" + "=" * 80)
            print(f"OVERALL: {status_icon(all_passed)} {'ALL CHECKS PASSED' if all_passed else 'SOME CHECKS FAILED'}")
            print("=" * 80)
        return results
