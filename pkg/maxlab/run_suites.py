"""
Acceptance batteries.

Every suite builds its spaces, runs its checks and returns one row per
check: criterion id, check label, pass flag (None for report-only rows)
and a short detail string. ``suite(name)`` prints the battery in the
usual banner layout and returns (passed, frame).
"""

from pathlib import Path
import sys
import logging
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from maxlab.constructions import (ad_regular_space, doubling_product_space, euclidean_star, kary_tree,
                                  star_space, torus)
from maxlab.covering import (coverage_probability_check, intensity, intensity_bounds_check,
                             lindenstrauss_experiment, poisson_moments, subexp_radii)
from maxlab.field import (field_for, gauss_sum_report, indicator_fourier_max, level_set_sizes, minkowski_report,
                          quadratic_level_space)
from maxlab.maximal import (geometric_radii, lacunary_radii, lifted_lower_bound_check, maximal_profile,
                            weak_norm_witness)
from maxlab.mms import MetricMeasureSpace, RadiiSet
from maxlab.partitions import (default_beta, doob_check, expected_padded_measure, localization_experiment,
                               localization_gate, localized_depth, localized_operators, modified_doob_check,
                               padding_probability, sample_partition_tree)
from maxlab.treebounds import (NAIVE_MATRIX_LIMIT, distributional_check, domination_check, exhaustive_pair_bound,
                               pair_bound_holds, pair_count, pair_count_naive, tree_distance_matrix,
                               tree_weak_norm_scan)
from maxlab.utils import make_rng, print_banner, status_icon, trial_rng
from maxlab.validation import SpaceValidator, regularity_check

logger = logging.getLogger(__name__)

# witness of δ_root on the binary tree of depth 10 (spherical operator, drop mode)
TREE_WITNESS_BOUND = Fraction(21, 16)
TREE_DEGREE_SPREAD = 1.5
PADDING_FLOOR = 0.47


def _row(criterion: str, check: str, passed: Optional[bool], detail: str = "") -> Dict[str, Any]:
    return {"criterion": criterion, "check": check, "passed": None if passed is None else bool(passed), "detail": detail}


def _trials(base: int, factor: float) -> int:
    return max(1, int(round(base * factor)))


def _point_mass(space: MetricMeasureSpace, x: int = 0) -> np.ndarray:
    f = np.zeros(space.n_points, dtype=np.int64)
    f[x] = 1
    return f


def _radii_with_zero(space: MetricMeasureSpace) -> RadiiSet:
    """Realized radii plus radius 0, so that M f(x) >= |f(x)|."""
    return RadiiSet((0,) + tuple(c for c in RadiiSet.realized(space).codes if c > 0), space.scale)


# ============================================================================
# SUITES
# ============================================================================

def run_star(budget: Optional[int], factor: float) -> List[Dict[str, Any]]:
    rows = []
    for K in (2, 5, 10, 50):
        space = star_space(K)
        profile = maximal_profile(space, _point_mass(space), _radii_with_zero(space), budget=budget)
        value = weak_norm_witness(profile).certified_value
        rows.append(_row("C1", f"star K={K}", value == K - 1, f"witness {value}, expected {K - 1}"))
    for n in (10, 100):
        space = euclidean_star(n)
        profile = maximal_profile(space, _point_mass(space), _radii_with_zero(space), budget=budget)
        lowest = min(profile.value(x) for x in range(profile.n_points))
        value = weak_norm_witness(profile).certified_value
        rows.append(_row("C2", f"euclidean star n={n}", lowest >= Fraction(1, 2) and value >= Fraction(n + 1, 2),
                         f"min M f = {lowest}, witness {value}"))
    return rows


def run_prelim(budget: Optional[int], factor: float) -> List[Dict[str, Any]]:
    rows = []
    for q in (3, 5, 7, 9, 11, 13):
        report = gauss_sum_report(field_for(q))
        rows.append(_row("C3", f"Gauss sums q={q}", bool(report["pass"].all()),
                         f"max relative error {report['relative_error'].max():.3g}"))

    for q, m in ((7, 2), (7, 3), (9, 3), (11, 2), (13, 2), (3, 1), (5, 2)):
        report = level_set_sizes(quadratic_level_space(q, m, budget))
        # E_0 = {0} when -1 is a non-square and m = 2
        exempt = {0} if q % 4 == 3 and m == 2 else set()
        asserted = all(ok for z, ok in report["window"].items() if z not in exempt)
        passed = asserted if q >= 7 else None
        rows.append(_row("C4", f"level-set window q={q} m={m}", passed,
                         f"sizes {report['sizes']}" + (f", exempt z={sorted(exempt)}" if exempt else "")))

    for q, m in ((5, 2), (7, 2)):
        space = quadratic_level_space(q, m, budget)
        results = [indicator_fourier_max(space, z, budget=budget) for z in range(q)]
        worst = max(r["max_fourier"] for r in results)
        rows.append(_row("C5", f"Fourier bound q={q} m={m}", all(r["passed"] for r in results),
                         f"max |1̂_E| = {worst:.6g} vs {results[0]['bound']:.6g}"))

    for q, m in ((7, 2), (7, 3), (9, 3)):
        report = minkowski_report(quadratic_level_space(q, m, budget))
        rows.append(_row("C6", f"Minkowski bound q={q} m={m}", bool(report["pass"].all()),
                         f"min μ(W + E_z) = {report['measure'].min()} vs μ(X_q)/4 = {report['bound'].iloc[0]}"))
    return rows


def run_doubling(budget: Optional[int], factor: float) -> List[Dict[str, Any]]:
    q = 5
    rows = []
    space, table = doubling_product_space(q, q, budget=budget)
    rows.append(_row("C7", "ball structure (t=5)", table.passed, f"{len(table.rows)} bands"))
    report = regularity_check(space, "doubling", constant=2 * q, budget=budget)
    rows.append(_row("C7", "doubling with K=2q (t=5)", report.passed, report.message))
    radii = lacunary_radii(space, shift=space.quantum)
    value = weak_norm_witness(maximal_profile(space, _point_mass(space), radii, budget=budget)).certified_value
    rows.append(_row("C7", "point-mass witness >= q/12 (t=5)", value >= Fraction(q, 12), f"witness {value}"))

    for t in (2, 3):
        small, _ = doubling_product_space(q, t, budget=budget)
        radii = lacunary_radii(small, shift=small.quantum)
        f = _point_mass(small)
        bulk = weak_norm_witness(maximal_profile(small, f, radii, method="bulk")).certified_value
        if t == 2:
            naive = weak_norm_witness(maximal_profile(small, f, radii, method="naive", budget=budget)).certified_value
            rows.append(_row("C7", "bulk equals brute force (t=2)", bulk == naive, f"bulk {bulk}, naive {naive}"))
        rows.append(_row("C7", f"point-mass witness >= q/12 (t={t})", bulk >= Fraction(q, 12), f"witness {bulk}"))
        f_q = _point_mass(small.level_space)
        lifted = lifted_lower_bound_check(small, f_q)
        rows.append(_row("S5", f"lifted lower bound (t={t})", lifted["passed"],
                         f"levels {lifted['levels_used']}, witness {lifted['lifted_witness']}"))
    return rows


def run_ad(budget: Optional[int], factor: float) -> List[Dict[str, Any]]:
    space, table = ad_regular_space(2, 4, 16, m=3, budget=budget)
    claim = space.claim_check()
    invariance = SpaceValidator(seed=0).invariance_check(space, triples=_trials(10**5, factor))
    return [
        _row("C8", "ball forms B_j", table.passed, f"{len(table.rows)} breakpoints"),
        _row("C8", "B_j nesting", space.nested),
        _row("C8", "measure window (1/3)r^n <= μ(B)/μ(X_q) <= 4r^n", claim.passed,
             f"upper {claim.worst_ratio}, lower {claim.details['lower_ratio']}"),
        _row("C8", "translation invariance", invariance["passed"], invariance["message"]),
    ]


def run_partitions(budget: Optional[int], factor: float) -> List[Dict[str, Any]]:
    rows = []
    ring = torus(256, budget)
    n, K = 2, 5
    micro = regularity_check(ring, "microdoubling", {"n": n}, constant=K)
    rows.append(_row("C9", f"Z_256 is {n}-microdoubling with K={K}", micro.passed, micro.message))
    beta = default_beta(n, K)
    report = padding_probability(ring, beta, depth=4, trials=_trials(10_000, factor), seed=0)
    rows.append(_row("C9", "padding on Z_256", report.worst_lower >= PADDING_FLOOR,
                     f"worst Wilson lower {report.worst_lower:.4f}"))

    ad, _ = ad_regular_space(2, 4, 16, m=3, budget=budget)
    ad_micro = regularity_check(ad, "microdoubling", {"n": 16})
    ad_K = max(Fraction(5), ad_micro.worst_ratio)
    ad_report = padding_probability(ad, default_beta(16, ad_K), depth=3, trials=_trials(10_000, factor), seed=1)
    rows.append(_row("C9", "padding on the AD space", ad_report.worst_lower >= PADDING_FLOOR,
                     f"K={ad_K}, worst Wilson lower {ad_report.worst_lower:.4f}"))

    omega = np.zeros(ring.n_points, dtype=bool)
    omega[:64] = True
    frame = expected_padded_measure(ring, omega, beta, depth=4, trials=_trials(2_000, factor), seed=2)
    rows.append(_row("S6", "E μ(Ω padded) >= μ(Ω)/2 - slack", bool(frame["pass"].all()),
                     f"min mean {frame['mean_padded_measure'].min():.2f} of {frame['omega_measure'].iloc[0]}"))
    return rows


def _small_spaces() -> List[MetricMeasureSpace]:
    spaces: List[MetricMeasureSpace] = [torus(size) for size in (8, 16, 32, 64)]
    spaces += [star_space(K) for K in (3, 5, 8)]
    spaces += [euclidean_star(10), kary_tree(2, 4).as_space(), kary_tree(3, 3).as_space()]
    return spaces


def run_doob(budget: Optional[int], factor: float) -> List[Dict[str, Any]]:
    rows = []
    spaces = _small_spaces()
    failures = []
    trials = _trials(1_000, factor)
    for i in range(trials):
        rng = trial_rng(0, i)
        space = spaces[int(rng.integers(len(spaces)))]
        tree = sample_partition_tree(space, int(rng.integers(2, 5)), rng=rng)
        f = rng.choice([-1, 1], size=space.n_points) * rng.integers(0, 5, size=space.n_points)
        result = doob_check(space, f, tree.filtration())
        if not result["passed"]:
            failures.append((i, space.name))
    rows.append(_row("C10", f"Doob inequalities ({trials} instances)", not failures,
                     f"failures {failures[:3]}" if failures else "weak and L^p bounds hold"))

    beta = Fraction(1, 4)
    for space in (torus(64), kary_tree(2, 4).as_space()):
        radii = RadiiSet.realized(space)
        for i in (0, 1, 2):
            tree = sample_partition_tree(space, localized_depth(space, beta, i), seed=i)
            family = localized_operators(space, tree, beta, radii, i)
            f = make_rng(i).integers(0, 4, size=space.n_points)
            result = modified_doob_check(space, family.filtration, family.callables(), f,
                                         family.mana_constant(), family.mnf_constant())
            rows.append(_row("C10", f"modified Doob on {space.name} (i={i})", result["passed"], result["message"]))
    return rows


def run_covering(budget: Optional[int], factor: float) -> List[Dict[str, Any]]:
    rows = []
    ring = torus(4096, budget)
    subexp = subexp_radii(ring, 5)
    for label, radii, K in (("subexp", subexp, None), ("lacunary ratio 4", geometric_radii(ring, 4), None)):
        report = lindenstrauss_experiment(ring, radii, K, seed=0)
        rows.append(_row("C11", f"tempered maximal inequality ({label})", report.passed,
                         f"K={report.K}, worst ratio {report.worst_ratio:.4f}, {len(report.frame)} (f, λ) pairs"))

    values = subexp.values()
    rng = make_rng(0)
    support = rng.random(ring.n_points) < 0.3
    table = intensity(ring, support, values[1], [values[0]])
    K = lindenstrauss_experiment(ring, subexp.subset(subexp.codes[:2]), seed=0).K
    bounds = intensity_bounds_check(ring, table, K)
    rows.append(_row("C11", "intensity bounds", bounds["passed"], bounds["message"]))
    weights = [support.astype(np.float64), rng.random(ring.n_points), np.ones(ring.n_points)]
    moments = poisson_moments(ring, table, weights, trials=_trials(100_000, factor), seed=1)
    rows.append(_row("C11", "Poisson moments within 3σ", bool(moments["pass"].all()),
                     f"{len(moments)} moments"))
    coverage = coverage_probability_check(ring, table, centers=range(0, 4096, 512),
                                          trials=_trials(20_000, factor), seed=2)
    rows.append(_row("S8", "zero-count law", bool(coverage["pass"].all()), f"{len(coverage)} centers"))
    return rows


def run_tree(budget: Optional[int], factor: float) -> List[Dict[str, Any]]:
    rows = []
    for k, D in ((2, 3), (3, 2), (2, 2)):
        result = exhaustive_pair_bound(kary_tree(k, D))
        rows.append(_row("C12", f"exhaustive pair bound k={k} D={D}", result["passed"], result["message"]))

    trees = {(k, D): kary_tree(k, D, budget) for k in (2, 3, 4) for D in range(1, 9)}
    matrices = {key: tree_distance_matrix(tree) for key, tree in trees.items()
                if tree.n_vertices <= NAIVE_MATRIX_LIMIT}
    mismatches, violations = 0, 0
    instances = _trials(10_000, factor)
    for i in range(instances):
        rng = trial_rng(0, i)
        k, D = int(rng.integers(2, 5)), int(rng.integers(1, 9))
        tree = trees[(k, D)]
        E = rng.integers(tree.n_vertices, size=int(rng.integers(1, 13)))
        F = rng.integers(tree.n_vertices, size=int(rng.integers(1, 13)))
        r = int(rng.integers(0, 2 * D + 1))
        count = pair_count(tree, E, F, r)
        mismatches += count != pair_count_naive(tree, E, F, r, matrices.get((k, D)))
        violations += not pair_bound_holds(count, np.unique(E).size, np.unique(F).size, k, r)
    rows.append(_row("C12", f"pair counts on {instances} random instances", mismatches == 0 and violations == 0,
                     f"{mismatches} count mismatches, {violations} bound violations"))

    scan = tree_weak_norm_scan(range(2, 9), 10, ("delta_root",))
    spherical = scan[scan["variant"] == "spherical"]
    values = list(spherical["certified_value"])
    spread = max(values) / min(values)
    rows.append(_row("C13", "δ_root witnesses <= C0", all(v <= TREE_WITNESS_BOUND for v in values),
                     f"max {max(values)} vs C0 {TREE_WITNESS_BOUND}"))
    rows.append(_row("C13", "degree independence", float(spread) <= TREE_DEGREE_SPREAD, f"max/min {float(spread):.4f}"))

    tree = kary_tree(2, 6)
    f = make_rng(3).integers(0, 3, size=tree.n_vertices)
    result = domination_check(tree, f)
    rows.append(_row("S10", "ball average <= sphere maximum", result["passed"], result["message"]))
    dist = distributional_check(tree, f, 3, Fraction(1, 2), budget)
    rows.append(_row("S10", "distributional estimate (reported)", None, f"margin {dist['margin']}"))
    return rows


def run_localize(budget: Optional[int], factor: float) -> List[Dict[str, Any]]:
    rows = []
    product, _ = doubling_product_space(5, 2, budget=budget)
    ad, _ = ad_regular_space(1, 3, 5, budget=budget)
    spaces = [star_space(5), euclidean_star(10), torus(256), product, ad, kary_tree(2, 6).as_space()]
    for space in spaces:
        radii = RadiiSet.realized(space) if space.n_points <= 300 else lacunary_radii(space)
        gate = localization_gate(space, radii, n=2)
        rows.append(_row("C14", f"trivial direction on {space.name}", gate["passed"], gate["message"]))
    frame = localization_experiment(torus(256), RadiiSet.realized(torus(256)), 2, 5)
    rows.append(_row("C14", "localization ratios on Z_256", bool(frame["trivial_direction"].all()),
                     f"max ratio {frame['ratio'].max():.4f}"))
    return rows


SUITES: Dict[str, Dict[str, Any]] = {
    "star": {"criteria": ("C1", "C2"), "run": run_star,
             "description": "Star and Euclidean star lower bounds"},
    "prelim": {"criteria": ("C3", "C4", "C5", "C6"), "run": run_prelim,
               "description": "Gauss sums, level sets, Fourier and Minkowski bounds"},
    "doubling": {"criteria": ("C7", "S5"), "run": run_doubling,
                 "description": "Doubling product example"},
    "ad": {"criteria": ("C8",), "run": run_ad,
           "description": "Ahlfors-David regular example"},
    "partitions": {"criteria": ("C9", "S6"), "run": run_partitions,
                   "description": "Padding probabilities of random partition trees"},
    "doob": {"criteria": ("C10",), "run": run_doob,
             "description": "Doob and modified Doob inequalities"},
    "covering": {"criteria": ("C11", "S8"), "run": run_covering,
                 "description": "Tempered radii and Poisson covering"},
    "tree": {"criteria": ("C12", "C13", "S10"), "run": run_tree,
             "description": "Pair counts and weak norms on k-ary trees"},
    "localize": {"criteria": ("C14",), "run": run_localize,
                 "description": "Localization of the maximal operator"},
}


def suite(name: str, budget: Optional[int] = None, trials_factor: float = 1.0,
          verbose: bool = True) -> Tuple[bool, pd.DataFrame]:
    """
    Run one acceptance suite.

    Parameters:
    -----------
    name : str
        A key of SUITES, or 'all'.
    trials_factor : float
        Scales every Monte Carlo trial count (1.0 runs the full battery).

    Returns:
    --------
    (bool, DataFrame)
        Overall verdict and one row per check; report-only rows never fail.
    """
    names = list(SUITES) if name == "all" else [name]
    for key in names:
        if key not in SUITES:
            raise ValueError(f"Unknown suite {key!r}; expected one of {sorted(SUITES)} or 'all'")

    rows: List[Dict[str, Any]] = []
    if verbose:
        print_banner(f"ACCEPTANCE SUITE: {name.upper()}")
    for i, key in enumerate(names, start=1):
        entry = SUITES[key]
        runner: Callable[[Optional[int], float], List[Dict[str, Any]]] = entry["run"]
        if verbose:
            print(f"\n{i}. {entry['description']} ({', '.join(entry['criteria'])})")
            print("-" * 80)
        suite_rows = runner(budget, trials_factor)
        for row in suite_rows:
            row["suite"] = key
            if verbose:
                icon = "ℹ️ " if row["passed"] is None else status_icon(row["passed"])
                print(f"{icon} [{row['criterion']}] {row['check']}: {row['detail']}")
        rows.extend(suite_rows)

    frame = pd.DataFrame(rows, columns=["suite", "criterion", "check", "passed", "detail"])
    passed = all(row["passed"] is None or bool(row["passed"]) for row in rows)
    if verbose:
        print("\n" + "=" * 80)
        print(f"OVERALL: {status_icon(passed)} {'ALL CHECKS PASSED' if passed else 'SOME CHECKS FAILED'}")
        print("=" * 80)
    logger.info("Suite %s: %d checks, %s", name, len(rows), "passed" if passed else "FAILED")
    return passed, frame
