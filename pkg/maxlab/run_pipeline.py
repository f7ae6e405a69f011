"""
Manifest-driven experiment runner.

A manifest is a JSON object::

    {
        "experiment_id": "star5",
        "construction": {"kind": "star", "params": {"K": 5}},
        "operation": {"op": "weak_norm", "params": {"f": {"kind": "point_mass", "point": 0}}},
        "seed": 0
    }

``run`` writes ``<experiment_id>_summary.json`` and ``<experiment_id>_detail.csv``
and returns the process exit code.
"""

from pathlib import Path
import sys
import logging
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from maxlab import __version__
from maxlab.constructions import Construction, ConstructionSpec, KaryTree, build_space
from maxlab.covering import lindenstrauss_experiment, subexp_radii
from maxlab.maximal import geometric_radii, lacunary_radii, maximal_profile, weak_norm_witness
from maxlab.mms import MetricMeasureSpace, RadiiSet
from maxlab.partitions import (default_beta, doob_check, localization_experiment, padding_probability,
                               sample_partition_tree)
from maxlab.treebounds import (distributional_check, pair_bound_holds, pair_count, pair_count_naive,
                               tree_distance_matrix, tree_weak_norm_scan)
from maxlab.utils import (ManifestError, MaxlabError, make_rng, manifest_hash, to_fraction, trial_rng,
                          write_csv, write_json)
from maxlab.validation import SpaceValidator, regularity_check

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("experiment_id", "construction", "operation", "seed")
USAGE_EXIT_CODE = 2


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------

def build_function(space: MetricMeasureSpace, entry: Any, seed: int) -> Tuple[np.ndarray, Dict[str, Any]]:
    """
    Test function from a manifest entry.

    Accepted forms: an explicit list of values, or a dict with ``kind`` one of
    point_mass (``point``), indicator (``points``), ball_indicator
    (``center``, ``radius``), constant, random_indicator (``density``).
    """
    n = space.n_points
    if entry is None:
        entry = {"kind": "point_mass", "point": 0}
    if isinstance(entry, list):
        values = np.array([to_fraction(v) for v in entry], dtype=object)
        if values.size != n:
            raise ValueError(f"f has {values.size} values, space has {n} points")
        return values, {"kind": "explicit"}
    kind = entry.get("kind")
    f = np.zeros(n, dtype=np.int64)
    if kind == "point_mass":
        f[int(entry.get("point", 0))] = 1
    elif kind == "indicator":
        f[np.asarray(entry["points"], dtype=np.int64)] = 1
    elif kind == "ball_indicator":
        code = space.scale.code_floor(to_fraction(entry["radius"]))
        f = space.ball_mask(int(entry.get("center", 0)), code).astype(np.int64)
    elif kind == "constant":
        f[:] = 1
    elif kind == "random_indicator":
        f = (make_rng(seed).random(n) < float(entry.get("density", 0.1))).astype(np.int64)
        if not f.any():
            f[0] = 1
    else:
        raise ValueError(f"Unknown test function kind {kind!r}")
    return f, dict(entry)


def build_radii(space: MetricMeasureSpace, entry: Any) -> RadiiSet:
    """'realized', 'lacunary', {'ratio': r}, {'subexp': count} or {'values': [...]}."""
    if entry is None or entry == "realized":
        return RadiiSet.realized(space)
    if entry == "lacunary":
        return lacunary_radii(space)
    if isinstance(entry, list):
        return RadiiSet.from_values(space.scale, [to_fraction(v) for v in entry])
    if isinstance(entry, dict):
        if "values" in entry:
            return RadiiSet.from_values(space.scale, [to_fraction(v) for v in entry["values"]])
        if "ratio" in entry:
            return geometric_radii(space, to_fraction(entry["ratio"]), entry.get("start"))
        if "subexp" in entry:
            return subexp_radii(space, int(entry["subexp"]), float(entry.get("tolerance", 0.001)))
    raise ValueError(f"Unknown radii entry {entry!r}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

Result = Tuple[Dict[str, Any], pd.DataFrame]


def _metric_space(construction: Construction) -> MetricMeasureSpace:
    space = construction.space
    if isinstance(space, KaryTree):
        return space.as_space()
    return space


def op_weak_norm(construction: Construction, params: Dict[str, Any], seed: int, budget: Optional[int]) -> Result:
    space = _metric_space(construction)
    f, descriptor = build_function(space, params.get("f"), seed)
    radii = build_radii(space, params.get("radii"))
    profile = maximal_profile(space, f, radii, variant=params.get("variant", "standard"),
                              method=params.get("method", "auto"), budget=budget, f_descriptor=descriptor)
    certificate = weak_norm_witness(profile, float(params.get("p", 1)))
    summary = certificate.to_dict()
    expected = params.get("expect_at_least")
    summary["passed"] = True if expected is None else certificate.certified_value >= to_fraction(expected)
    return summary, profile.to_frame()


def op_regularity(construction: Construction, params: Dict[str, Any], seed: int, budget: Optional[int]) -> Result:
    space = _metric_space(construction)
    report = regularity_check(space, params["kind"], params.get("params"), params.get("constant"), budget)
    summary = report.to_dict()
    summary["passed"] = report.passed is not False
    return summary, pd.DataFrame([summary])


def op_validate(construction: Construction, params: Dict[str, Any], seed: int, budget: Optional[int]) -> Result:
    space = _metric_space(construction)
    validator = SpaceValidator(exhaustive_limit=int(params.get("exhaustive_limit", 500)),
                               sample_pairs=int(params.get("sample_pairs", 10**6)), seed=seed)
    results = validator.run_all_validations(space, params.get("regularity"), verbose=False)
    rows = [{"check": key, "passed": value["passed"], "message": value["message"]}
            for key, value in results.items() if isinstance(value, dict)]
    return {"checks": len(rows), "passed": results["all_passed"]}, pd.DataFrame(rows)


def op_ball_structure(construction: Construction, params: Dict[str, Any], seed: int, budget: Optional[int]) -> Result:
    if construction.table is None:
        raise ValueError(f"Construction {construction.spec.kind} has no ball structure table")
    table = construction.table
    return {"bands": len(table.rows), "passed": table.passed}, table.to_frame()


def op_padding(construction: Construction, params: Dict[str, Any], seed: int, budget: Optional[int]) -> Result:
    space = _metric_space(construction)
    if "beta" in params:
        beta = to_fraction(params["beta"])
    else:
        beta = default_beta(int(params["n"]), to_fraction(params["K"]))
    report = padding_probability(space, beta, int(params.get("depth", 4)), int(params.get("trials", 10_000)), seed,
                                 slack=float(params.get("slack", 0.03)), workers=params.get("workers"))
    return report.summary(), report.to_frame()


def op_doob(construction: Construction, params: Dict[str, Any], seed: int, budget: Optional[int]) -> Result:
    space = _metric_space(construction)
    rows = []
    for i in range(int(params.get("trials", 10))):
        rng = trial_rng(seed, i)
        tree = sample_partition_tree(space, int(params.get("depth", 4)), rng=rng)
        f = rng.choice([-1, 1], size=space.n_points) * rng.integers(0, 4, size=space.n_points)
        result = doob_check(space, f, tree.filtration(), params.get("p_values", (2, 4)))
        rows.append({"trial": i, "weak_quantity": result["weak_quantity"], "l1_norm": result["l1_norm"],
                     "margin": result["margin"], "passed": result["passed"]})
    frame = pd.DataFrame(rows)
    return {"trials": len(rows), "passed": bool(frame["passed"].all())}, frame


def op_localize(construction: Construction, params: Dict[str, Any], seed: int, budget: Optional[int]) -> Result:
    space = _metric_space(construction)
    radii = build_radii(space, params.get("radii"))
    frame = localization_experiment(space, radii, int(params["n"]), to_fraction(params["K"]),
                                    band_samples=int(params.get("band_samples", 4)), seed=seed)
    frame = frame.drop(columns=["f_detail"])
    return {"rows": len(frame), "worst_ratio": float(frame["ratio"].max()),
            "passed": bool(frame["trivial_direction"].all())}, frame


def op_lindenstrauss(construction: Construction, params: Dict[str, Any], seed: int, budget: Optional[int]) -> Result:
    space = _metric_space(construction)
    radii = build_radii(space, params.get("radii", "lacunary"))
    K = to_fraction(params["K"]) if "K" in params else None
    report = lindenstrauss_experiment(space, radii, K, lambda_grid=params.get("lambda_grid"), seed=seed)
    return report.to_dict(), report.frame


def op_tree(construction: Construction, params: Dict[str, Any], seed: int, budget: Optional[int]) -> Result:
    tree = construction.space
    if not isinstance(tree, KaryTree):
        raise ValueError("The tree operation needs a kary_tree construction")
    check = params.get("check", "pairs")
    rng = make_rng(seed)
    rows = []
    if check == "pairs":
        distances = tree_distance_matrix(tree)
        for i in range(int(params.get("instances", 200))):
            E = np.flatnonzero(rng.random(tree.n_vertices) < 0.3)
            F = np.flatnonzero(rng.random(tree.n_vertices) < 0.3)
            r = int(rng.integers(0, 2 * tree.D + 1))
            count = pair_count(tree, E, F, r)
            naive = pair_count_naive(tree, E, F, r, distances)
            rows.append({"instance": i, "r": r, "E": E.size, "F": F.size, "count": count, "naive": naive,
                         "passed": count == naive and pair_bound_holds(count, E.size, F.size, tree.k, r)})
    elif check == "dist":
        f = (rng.random(tree.n_vertices) < 0.2).astype(np.int64) * rng.integers(1, 8, size=tree.n_vertices)
        for r in params.get("radii", range(0, tree.D + 1)):
            for lam in params.get("lambdas", ["1/8", "1/4", "1/2", "1"]):
                result = distributional_check(tree, f, int(r), to_fraction(lam), budget)
                rows.append({key: result[key] for key in ("r", "lambda", "lhs", "rhs", "margin", "passed")})
    elif check == "weaknorm":
        frame = tree_weak_norm_scan(params.get("k_list", [tree.k]), int(params.get("D", tree.D)),
                                    params.get("f_family", ("delta_root", "constant")), params.get("mode", "drop"))
        return {"rows": len(frame), "max_witness": frame["value_float"].max(), "passed": True}, frame
    else:
        raise ValueError(f"Unknown tree check {check!r}; expected pairs, dist or weaknorm")
    frame = pd.DataFrame(rows)
    return {"check": check, "rows": len(frame), "passed": bool(frame["passed"].all())}, frame


OPERATIONS: Dict[str, Dict[str, Any]] = {
    "weak_norm": {"run": op_weak_norm, "description": "Certified weak (1,1) witness of M_R f"},
    "regularity": {"run": op_regularity, "description": "Exact doubling / microdoubling / AD ratio"},
    "validate": {"run": op_validate, "description": "Structural validator battery"},
    "ball_structure": {"run": op_ball_structure, "description": "Predicted vs observed ball forms"},
    "padding": {"run": op_padding, "description": "Monte Carlo padding probabilities"},
    "doob": {"run": op_doob, "description": "Doob inequalities on sampled tree filtrations"},
    "localize": {"run": op_localize, "description": "Localization ratio experiment"},
    "lindenstrauss": {"run": op_lindenstrauss, "description": "Tempered maximal inequality margins"},
    "tree": {"run": op_tree, "description": "Pair counts, distributional estimate or weak-norm scan on trees"},
}


# ---------------------------------------------------------------------------
# Manifest handling
# ---------------------------------------------------------------------------

def validate_manifest(manifest: Any) -> Dict[str, Any]:
    """Check the manifest schema; returns a normalized copy."""
    if not isinstance(manifest, dict) or not manifest:
        raise ManifestError("Manifest must be a non-empty JSON object")
    missing = [key for key in REQUIRED_KEYS if key not in manifest]
    if missing:
        raise ManifestError(f"Manifest is missing keys {missing}")
    experiment_id = manifest["experiment_id"]
    if not isinstance(experiment_id, str) or not experiment_id or "/" in experiment_id:
        raise ManifestError(f"experiment_id must be a plain non-empty string, got {experiment_id!r}")
    seed = manifest["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ManifestError(f"seed must be a non-negative integer, got {seed!r}")
    construction = manifest["construction"]
    if not isinstance(construction, dict) or "kind" not in construction:
        raise ManifestError("construction must be an object with a 'kind'")
    try:
        ConstructionSpec(construction["kind"], dict(construction.get("params", {})))
    except ValueError as exc:
        raise ManifestError(f"Invalid construction: {exc}") from exc
    operation = manifest["operation"]
    if not isinstance(operation, dict) or operation.get("op") not in OPERATIONS:
        raise ManifestError(f"operation.op must be one of {sorted(OPERATIONS)}")
    outputs = manifest.get("outputs", {})
    if not isinstance(outputs, dict):
        raise ManifestError("outputs must be an object")
    normalized = dict(manifest)
    normalized["outputs"] = {
        "summary": outputs.get("summary", f"{experiment_id}_summary.json"),
        "detail": outputs.get("detail", f"{experiment_id}_detail.csv"),
    }
    return normalized


def _failure_record(exc: Exception, exit_code: int, manifest_sha: Optional[str]) -> Dict[str, Any]:
    return {"error": type(exc).__name__, "message": str(exc), "exit_code": exit_code,
            "manifest_sha256": manifest_sha, "version": __version__, "passed": False}


def run(manifest: Any, out_dir: Path, budget: Optional[int] = None) -> int:
    """
    Run one manifest and write its reports.

    Returns:
    --------
    int
        0 when every checked invariant passes, 1 when one fails, otherwise
        the exit code of the error raised (2 usage, 3 manifest, 4 budget,
        5 seed cap, 6 triangle inequality, 7 hypothesis).
    """
    out_dir = Path(out_dir)
    sha = manifest_hash(manifest) if isinstance(manifest, dict) else None
    try:
        manifest = validate_manifest(manifest)
    except ManifestError as exc:
        write_json(_failure_record(exc, exc.exit_code, sha), out_dir / "manifest_failure.json")
        logger.error("%s", exc)
        return exc.exit_code

    experiment_id = manifest["experiment_id"]
    summary_path = out_dir / manifest["outputs"]["summary"]
    budget = budget if budget is not None else manifest.get("budget")
    try:
        spec = ConstructionSpec(manifest["construction"]["kind"], dict(manifest["construction"].get("params", {})))
        construction = build_space(spec, budget)
        operation = manifest["operation"]
        runner: Callable[..., Result] = OPERATIONS[operation["op"]]["run"]
        summary, detail = runner(construction, dict(operation.get("params", {})), manifest["seed"], budget)
    except MaxlabError as exc:
        write_json(_failure_record(exc, exc.exit_code, sha), summary_path)
        logger.error("%s failed: %s", experiment_id, exc)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        write_json(_failure_record(exc, USAGE_EXIT_CODE, sha), summary_path)
        logger.error("%s failed: %s", experiment_id, exc)
        return USAGE_EXIT_CODE

    passed = bool(summary.get("passed", True))
    payload = {
        "experiment_id": experiment_id,
        "construction": construction.descriptor(),
        "operation": manifest["operation"],
        "manifest_sha256": sha,
        "seed": manifest["seed"],
        "version": __version__,
        "result": summary,
        "passed": passed,
    }
    write_json(payload, summary_path)
    write_csv(detail, out_dir / manifest["outputs"]["detail"])
    logger.info("%s: %s (summary %s)", experiment_id, "passed" if passed else "FAILED", summary_path)
    return 0 if passed else 1
