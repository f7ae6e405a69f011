"""Shared fixtures for the maxlab test suite."""

from pathlib import Path
import sys

import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from maxlab.constructions import euclidean_star, kary_tree, star_space, torus


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full acceptance batteries (minutes)")


@pytest.fixture(autouse=True)
def _clear_budget(monkeypatch):
    monkeypatch.delenv("MAXLAB_BUDGET", raising=False)


@pytest.fixture
def star5():
    return star_space(5)


@pytest.fixture
def ring16():
    return torus(16)


@pytest.fixture
def ring64():
    return torus(64)


@pytest.fixture
def euclid10():
    return euclidean_star(10)


@pytest.fixture
def binary_tree():
    return kary_tree(2, 3)
