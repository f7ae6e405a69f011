"""Errors, budget resolution, exact formatting, seeding and report writers."""

import json
from fractions import Fraction

import numpy as np
import pandas as pd
import pytest

from maxlab.utils import (DEFAULT_BUDGET, BudgetExceededError, HypothesisViolation, ManifestError, MaxlabError,
                          SeedCapExceededError, TriangleInequalityError, as_integer_vector, canonical_json,
                          check_budget, format_number, manifest_hash, resolve_budget, save_text_report,
                          to_fraction, trial_rng, write_csv, write_json)


class TestErrors:
    """Every error carries its own exit code."""

    @pytest.mark.parametrize("error, code", [
        (MaxlabError("x"), 1),
        (ManifestError("x"), 3),
        (BudgetExceededError("x"), 4),
        (SeedCapExceededError("x", 7), 5),
        (TriangleInequalityError("x", (0, 1, 2)), 6),
        (HypothesisViolation("x"), 7),
    ])
    def test_exit_codes(self, error, code):
        assert error.exit_code == code, f"{type(error).__name__} exits {error.exit_code}, expected {code}"

    def test_manifest_error_is_value_error(self):
        assert isinstance(ManifestError("bad"), ValueError)

    def test_payloads_are_kept(self):
        assert SeedCapExceededError("cap", (3, 1)).seed == (3, 1)
        assert TriangleInequalityError("bad", (4, 5, 6)).triple == (4, 5, 6)
        assert HypothesisViolation("K", witness=(0, 2)).witness == (0, 2)
        assert "witness=(0, 2)" in str(HypothesisViolation("K", witness=(0, 2)))


class TestBudget:
    """Explicit argument, then MAXLAB_BUDGET, then the default."""

    def test_default(self):
        assert resolve_budget() == DEFAULT_BUDGET

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("MAXLAB_BUDGET", "1e5")
        assert resolve_budget() == 100_000

    def test_explicit_wins(self, monkeypatch):
        monkeypatch.setenv("MAXLAB_BUDGET", "1000")
        assert resolve_budget(50) == 50

    def test_invalid_environment(self, monkeypatch):
        monkeypatch.setenv("MAXLAB_BUDGET", "lots")
        with pytest.raises(ValueError):
            resolve_budget()

    def test_check_budget_names_hint(self):
        with pytest.raises(BudgetExceededError, match="use the fast path"):
            check_budget(1e9, "big job", budget=1000, hint="use the fast path")
        check_budget(999, "small job", budget=1000)


class TestExactNumbers:
    """Fractions in, "p/q" strings out."""

    def test_to_fraction(self):
        assert to_fraction(0.1) == Fraction(1, 10)
        assert to_fraction("3/4") == Fraction(3, 4)
        assert to_fraction(np.int64(5)) == 5

    def test_integer_vector(self):
        ints, unit = as_integer_vector([Fraction(1, 2), Fraction(1, 3), 1])
        assert unit == Fraction(1, 6)
        assert ints.tolist() == [3, 2, 6]

    def test_integer_input_is_untouched(self):
        ints, unit = as_integer_vector(np.array([1, -2, 3]))
        assert unit == 1 and ints.tolist() == [1, -2, 3]

    @pytest.mark.parametrize("value, expected", [
        (Fraction(63, 48), "21/16"),
        (Fraction(4), "4"),
        (0.1 + 0.2, "0.3"),
        (np.bool_(True), True),
        (np.int64(7), 7),
    ])
    def test_format_number(self, value, expected):
        assert format_number(value) == expected


class TestSeeding:
    def test_trial_streams_are_reproducible(self):
        a = trial_rng(0, 5).random(4)
        b = trial_rng(0, 5).random(4)
        assert np.array_equal(a, b)

    def test_trial_streams_differ(self):
        assert not np.array_equal(trial_rng(0, 1).random(4), trial_rng(0, 2).random(4))


class TestReports:
    def test_manifest_hash_ignores_key_order(self):
        assert manifest_hash({"a": 1, "b": Fraction(1, 2)}) == manifest_hash({"b": Fraction(1, 2), "a": 1})
        assert canonical_json({"b": Fraction(1, 2)}) == '{"b":"1/2"}'

    def test_json_is_sorted(self, tmp_path):
        path = write_json({"b": Fraction(2, 3), "a": [1, 0.5]}, tmp_path / "out" / "s.json")
        data = json.loads(path.read_text(encoding="utf-8"))
        assert data == {"a": [1, "0.5"], "b": "2/3"}
        assert path.read_text(encoding="utf-8").index('"a"') < path.read_text(encoding="utf-8").index('"b"')

    def test_csv_formats_cells(self, tmp_path):
        path = write_csv([{"x": Fraction(1, 3), "ok": True}], tmp_path / "d.csv")
        frame = pd.read_csv(path)
        assert frame.loc[0, "x"] == "1/3"

    def test_text_report_sections(self, tmp_path):
        path = save_text_report({"summary": {"passed": True, "value": Fraction(5, 2)}}, tmp_path / "r.txt", "demo")
        text = path.read_text(encoding="utf-8")
        assert "REPORT: demo" in text and "[summary]" in text and "- value: 5/2" in text
