"""Command-line surface and the acceptance suites."""

import json

import pytest

from maxlab.cli import build_parser, main, manifest_from_args
from maxlab.run_suites import SUITES, suite


class TestParser:
    def test_manifest_from_flags(self):
        args = build_parser().parse_args(["maxnorm", "--space", "star", "--params", '{"K": 5}', "--trials", "7"])
        manifest = manifest_from_args(args)
        assert manifest["experiment_id"] == "maxnorm_star"
        assert manifest["construction"] == {"kind": "star", "params": {"K": 5}}
        assert manifest["operation"] == {"op": "weak_norm", "params": {"trials": 7}}

    def test_operation_override(self):
        args = build_parser().parse_args(["construct", "--space", "torus", "--params", '{"size": 8}',
                                          "--op", "regularity", "--op-params", '{"kind": "doubling"}'])
        assert manifest_from_args(args)["operation"]["op"] == "regularity"

    def test_invalid_json_is_a_usage_error(self):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["maxnorm", "--space", "star", "--params", "{K: 5}"])
        assert info.value.code == 2

    def test_unknown_space(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["maxnorm", "--space", "hyperbolic"])


class TestMain:
    """Exit codes flow straight out of main."""

    def test_maxnorm(self, tmp_path, capsys):
        code = main(["--out-dir", str(tmp_path), "maxnorm", "--space", "star", "--params", '{"K": 5}'])
        assert code == 0
        assert (tmp_path / "maxnorm_star_summary.json").exists()
        assert "exit 0" in capsys.readouterr().out

    def test_budget_flag(self, tmp_path):
        code = main(["--budget", "100", "--out-dir", str(tmp_path), "construct", "--space", "torus",
                     "--params", '{"size": 4096}'])
        assert code == 4

    def test_run_manifests(self, tmp_path):
        good = tmp_path / "good.json"
        good.write_text(json.dumps({
            "experiment_id": "ring",
            "construction": {"kind": "torus", "params": {"size": 16}},
            "operation": {"op": "regularity", "params": {"kind": "doubling", "constant": 3}},
            "seed": 0,
        }), encoding="utf-8")
        out = tmp_path / "out"
        assert main(["--out-dir", str(out), "run", str(good)]) == 0
        assert main(["--out-dir", str(out), "run", str(good), str(tmp_path / "missing.json")]) == 2

    def test_bad_manifest_file(self, tmp_path):
        bad = tmp_path / "empty.json"
        bad.write_text("{}", encoding="utf-8")
        assert main(["--out-dir", str(tmp_path), "run", str(bad)]) == 3

    def test_suite_writes_reports(self, tmp_path):
        assert main(["--out-dir", str(tmp_path), "suite", "star"]) == 0
        assert (tmp_path / "suite_star.csv").exists()
        text = (tmp_path / "suite_star.txt").read_text(encoding="utf-8")
        assert "[summary]" in text and "[C1]" in text and "- failed: 0" in text


class TestSuites:
    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            suite("bogus")

    def test_star_suite(self, capsys):
        passed, frame = suite("star")
        assert passed, frame[frame["passed"] == False].to_string()  # noqa: E712
        assert set(frame["criterion"]) == {"C1", "C2"}
        out = capsys.readouterr().out
        assert "ACCEPTANCE SUITE: STAR" in out and "ALL CHECKS PASSED" in out

    def test_quiet_suite(self, capsys):
        passed, _ = suite("star", verbose=False)
        assert passed
        assert capsys.readouterr().out == ""

    def test_registry_shape(self):
        for name, entry in SUITES.items():
            assert callable(entry["run"]), name
            assert entry["criteria"] and entry["description"], name

    @pytest.mark.slow
    @pytest.mark.parametrize("name", sorted(set(SUITES) - {"star"}))
    def test_full_battery(self, name):
        passed, frame = suite(name, verbose=False)
        assert passed, frame[frame["passed"] == False].to_string()  # noqa: E712
