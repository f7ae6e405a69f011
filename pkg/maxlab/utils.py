"""
Utility functions shared by the maxlab modules: errors, budget configuration,
exact number formatting, seeding and report writers.
"""

import hashlib
import json
import logging
import math
import os
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 20_000_000
BUDGET_ENV_VAR = "MAXLAB_BUDGET"

Number = Union[int, float, Fraction]


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class MaxlabError(Exception):
    """Base class for every error raised on purpose by maxlab."""

    exit_code = 1


class ManifestError(MaxlabError, ValueError):
    """Experiment manifest does not validate against the schema."""

    exit_code = 3


class BudgetExceededError(MaxlabError):
    """Point count or work estimate is over the configured budget."""

    exit_code = 4


class SeedCapExceededError(MaxlabError):
    """Partition sampler drew more centers than its cap allows."""

    exit_code = 5

    def __init__(self, message: str, seed: Any):
        super().__init__(f"{message} (seed={seed})")
        self.seed = seed


class TriangleInequalityError(MaxlabError):
    """A constructed metric violates the triangle inequality."""

    exit_code = 6

    def __init__(self, message: str, triple: Tuple[int, int, int]):
        super().__init__(f"{message}: violating triple {triple}")
        self.triple = triple


class HypothesisViolation(MaxlabError):
    """A precondition of an inequality harness does not hold."""

    exit_code = 7

    def __init__(self, message: str, witness: Any = None):
        super().__init__(message if witness is None else f"{message}; witness={witness}")
        self.witness = witness


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def resolve_budget(budget: Optional[int] = None) -> int:
    """
    Resolve the work budget.

    Parameters:
    -----------
    budget : int, optional
        Explicit budget (CLI flag or keyword). Wins over the environment.

    Returns:
    --------
    int
        Explicit value, else ``MAXLAB_BUDGET``, else 2·10⁷.
    """
    if budget is not None:
        if budget <= 0:
            raise ValueError(f"Budget must be positive, got {budget}")
        return int(budget)
    env_value = os.environ.get(BUDGET_ENV_VAR)
    if env_value:
        try:
            value = int(float(env_value))
        except ValueError:
            raise ValueError(f"{BUDGET_ENV_VAR}={env_value!r} is not a number")
        if value <= 0:
            raise ValueError(f"{BUDGET_ENV_VAR} must be positive, got {value}")
        return value
    return DEFAULT_BUDGET


def check_budget(cost: float, what: str, budget: Optional[int] = None, hint: Optional[str] = None) -> None:
    limit = resolve_budget(budget)
    if cost > limit:
        message = f"{what}: estimated cost {cost:.3g} exceeds budget {limit:,}"
        if hint:
            message += f". {hint}"
        raise BudgetExceededError(message)
    logger.debug("%s: cost %.3g within budget %d", what, cost, limit)


# ---------------------------------------------------------------------------
# Exact numbers
# ---------------------------------------------------------------------------

def to_fraction(value: Number) -> Fraction:
    """Convert ints, Fractions, numpy scalars and floats to a Fraction.

    Floats go through ``limit_denominator(10**9)`` so that decimal literals
    such as 0.1 come back as 1/10.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value)
    return Fraction(float(value)).limit_denominator(10**9)


def as_integer_vector(values: Sequence[Number]) -> Tuple[np.ndarray, Fraction]:
    """
    Write a rational vector as ``ints * unit``.

    Returns:
    --------
    (np.ndarray of int64, Fraction)
        Integer numerators sharing the common denominator folded into ``unit``.
    """
    array = np.asarray(values)
    if array.dtype.kind in "iub":
        return array.astype(np.int64), Fraction(1)
    fractions = [to_fraction(v) for v in array.ravel().tolist()]
    denominator = 1
    for fr in fractions:
        denominator = math.lcm(denominator, fr.denominator)
    ints = np.array([fr.numerator * (denominator // fr.denominator) for fr in fractions], dtype=object)
    if ints.size and max(abs(int(v)) for v in ints) < 2**62:
        ints = ints.astype(np.int64)
    return ints.reshape(array.shape), Fraction(1, denominator)


def format_number(value: Any) -> Any:
    """Format a value for reports: rationals as "p/q", floats with 12 significant digits."""
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        if math.isinf(value) or math.isnan(value):
            return str(float(value))
        return format(float(value), ".12g")
    if isinstance(value, complex):
        return f"{format(value.real, '.12g')}{format(value.imag, '+.12g')}j"
    if isinstance(value, dict):
        return {str(k): format_number(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [format_number(v) for v in value]
    if isinstance(value, np.ndarray):
        return [format_number(v) for v in value.tolist()]
    return value


def format_frame(df: pd.DataFrame) -> pd.DataFrame:
    """Apply :func:`format_number` cell by cell."""
    return df.apply(lambda column: column.map(format_number))


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------

def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Generator for trial ``trial``; depends only on (master_seed, trial)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial),)))


def make_rng(seed: Optional[int]) -> np.random.Generator:
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def canonical_json(obj: Any) -> str:
    return json.dumps(format_number(obj), sort_keys=True, separators=(",", ":"))


def manifest_hash(manifest: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(manifest).encode("utf-8")).hexdigest()


def write_json(payload: Dict[str, Any], output_path: Path) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with output_path.open("w", encoding="utf-8") as handle:
        json.dump(format_number(payload), handle, sort_keys=True, indent=2)
        handle.write("\n")
    return output_path


def write_csv(rows: Union[pd.DataFrame, Iterable[Dict[str, Any]]], output_path: Path) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    df = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    format_frame(df).to_csv(output_path, index=False)
    return output_path


def save_text_report(results: Dict[str, Any], output_path: Path, title: str) -> Path:
    """
    Write a sectioned plain-text report.

    Parameters:
    -----------
    results : dict
        Section name -> dict of values (or a single value).
    output_path : Path
        Destination file.
    title : str
        Report heading.
    """
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with output_path.open("w", encoding="utf-8") as report_file:
        report_file.write(f"REPORT: {title}\n")
        report_file.write("=" * 80 + "\n\n")
        for section, values in results.items():
            report_file.write(f"[{section}]\n")
            if isinstance(values, dict):
                for key, value in values.items():
                    report_file.write(f"- {key}: {format_number(value)}\n")
            else:
                report_file.write(f"- {format_number(values)}\n")
            report_file.write("\n")
    return output_path


def status_icon(passed: bool) -> str:
    return "✅" if passed else "❌"


def print_banner(title: str) -> None:
    print("=" * 80)
    print(title)
    print("=" * 80)
