"""Manifest validation, report files and exit codes of the experiment runner."""

import json
from pathlib import Path

import pytest

from maxlab.run_pipeline import build_function, build_radii, run, validate_manifest
from maxlab.utils import ManifestError

MANIFEST_DIR = Path(__file__).resolve().parents[1] / "manifests"

STAR_MANIFEST = {
    "experiment_id": "star5",
    "construction": {"kind": "star", "params": {"K": 5}},
    "operation": {"op": "weak_norm", "params": {"f": {"kind": "point_mass", "point": 0}, "expect_at_least": "3"}},
    "seed": 0,
}


def _manifest(**changes):
    manifest = json.loads(json.dumps(STAR_MANIFEST))
    manifest.update(changes)
    return manifest


def _read(path):
    return json.loads(path.read_text(encoding="utf-8"))


class TestManifestValidation:
    def test_default_outputs(self):
        normalized = validate_manifest(_manifest())
        assert normalized["outputs"] == {"summary": "star5_summary.json", "detail": "star5_detail.csv"}

    @pytest.mark.parametrize("bad", [
        {},
        {"experiment_id": "x"},
        {"experiment_id": "", "construction": {"kind": "star", "params": {"K": 5}},
         "operation": {"op": "weak_norm"}, "seed": 0},
        {"experiment_id": "a/b", "construction": {"kind": "star", "params": {"K": 5}},
         "operation": {"op": "weak_norm"}, "seed": 0},
    ])
    def test_rejects_malformed(self, bad):
        with pytest.raises(ManifestError):
            validate_manifest(bad)

    def test_rejects_bad_seed_and_kind(self):
        with pytest.raises(ManifestError):
            validate_manifest(_manifest(seed=-1))
        with pytest.raises(ManifestError):
            validate_manifest(_manifest(seed=True))
        with pytest.raises(ManifestError):
            validate_manifest(_manifest(construction={"kind": "klein_bottle", "params": {}}))


class TestRun:
    """Exit codes 0-7 and the files written for each."""

    def test_star_weak_norm(self, tmp_path):
        assert run(_manifest(), tmp_path) == 0
        summary = _read(tmp_path / "star5_summary.json")
        assert summary["passed"] is True
        assert summary["result"]["certified_value"] == "16/5"
        assert summary["construction"]["params"] == {"K": 5}
        assert (tmp_path / "star5_detail.csv").exists()

    def test_repeat_run_is_byte_identical(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        assert run(_manifest(), first) == 0
        assert run(_manifest(), second) == 0
        for name in ("star5_summary.json", "star5_detail.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_failed_expectation(self, tmp_path):
        manifest = _manifest()
        manifest["operation"]["params"]["expect_at_least"] = "4"
        assert run(manifest, tmp_path) == 1
        assert _read(tmp_path / "star5_summary.json")["passed"] is False

    def test_empty_manifest(self, tmp_path):
        assert run({}, tmp_path) == 3
        failure = _read(tmp_path / "manifest_failure.json")
        assert failure["exit_code"] == 3
        assert failure["error"] == "ManifestError"

    def test_unknown_operation(self, tmp_path):
        assert run(_manifest(operation={"op": "integrate"}), tmp_path) == 3

    def test_budget_exceeded(self, tmp_path):
        manifest = _manifest(experiment_id="big", construction={"kind": "torus", "params": {"size": 10**6}})
        assert run(manifest, tmp_path, budget=1000) == 4
        assert _read(tmp_path / "big_summary.json")["exit_code"] == 4

    def test_budget_from_manifest(self, tmp_path):
        manifest = _manifest(experiment_id="big", construction={"kind": "torus", "params": {"size": 10**6}},
                             budget=1000)
        assert run(manifest, tmp_path) == 4

    def test_hypothesis_violation(self, tmp_path):
        manifest = _manifest(experiment_id="loc", construction={"kind": "torus", "params": {"size": 64}},
                             operation={"op": "localize", "params": {"n": 2, "K": 4, "radii": "lacunary"}})
        assert run(manifest, tmp_path) == 7

    def test_bad_operation_params(self, tmp_path):
        manifest = _manifest()
        manifest["operation"]["params"]["f"] = {"kind": "gaussian"}
        assert run(manifest, tmp_path) == 2

    @pytest.mark.parametrize("operation", [
        {"op": "regularity", "params": {"kind": "doubling", "constant": 3}},
        {"op": "validate", "params": {"regularity": [{"kind": "doubling", "constant": 3}]}},
        {"op": "doob", "params": {"trials": 3, "depth": 3}},
        {"op": "lindenstrauss", "params": {"radii": {"ratio": 4}}},
        {"op": "padding", "params": {"beta": "1/16", "depth": 2, "trials": 30, "slack": 1}},
    ])
    def test_operations_on_cycle(self, tmp_path, operation):
        manifest = _manifest(experiment_id="ring", construction={"kind": "torus", "params": {"size": 16}},
                             operation=operation)
        assert run(manifest, tmp_path) == 0, _read(tmp_path / "ring_summary.json")

    @pytest.mark.parametrize("params", [
        {"check": "pairs", "instances": 20},
        {"check": "dist", "radii": [1, 2]},
        {"check": "weaknorm", "k_list": [2, 3], "D": 6},
    ])
    def test_tree_checks(self, tmp_path, params):
        manifest = _manifest(experiment_id="tree", construction={"kind": "kary_tree", "params": {"k": 2, "D": 3}},
                             operation={"op": "tree", "params": params})
        assert run(manifest, tmp_path) == 0

    def test_ball_structure_table(self, tmp_path):
        manifest = _manifest(experiment_id="prod", construction={"kind": "doubling_product", "params": {"q": 5, "t": 1}},
                             operation={"op": "ball_structure", "params": {}})
        assert run(manifest, tmp_path) == 0


class TestInputs:
    def test_functions(self, ring16):
        f, descriptor = build_function(ring16, {"kind": "ball_indicator", "center": 0, "radius": 2}, 0)
        assert f.sum() == 5 and descriptor["kind"] == "ball_indicator"
        f, _ = build_function(ring16, ["1/2"] * 16, 0)
        assert f[0] == 0.5
        with pytest.raises(ValueError):
            build_function(ring16, [1, 2], 0)

    def test_radii(self, ring16):
        assert build_radii(ring16, {"values": [1, "5/2"]}).codes == (1, 2)
        assert build_radii(ring16, "realized").codes == tuple(range(1, 9))
        with pytest.raises(ValueError):
            build_radii(ring16, "dyadic")


class TestShippedManifests:
    @pytest.mark.parametrize("path", sorted(MANIFEST_DIR.glob("*.json")), ids=lambda p: p.stem)
    def test_schema(self, path):
        normalized = validate_manifest(_read(path))
        assert normalized["outputs"]["summary"].endswith("_summary.json")
