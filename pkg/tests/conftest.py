"""Shared fixtures for the test suite."""
import numpy as np
import pytest

from src.models import SpaceInstance


@pytest.fixture
def rng():
    """Seeded generator; every sampled check in the tests is reproducible."""
    return np.random.default_rng(20240517)


@pytest.fixture
def line():
    """The real line as l_2^1."""
    return SpaceInstance(dim=1, p=2.0)


@pytest.fixture
def plane():
    return SpaceInstance(dim=2, p=2.0)


@pytest.fixture
def l4():
    return SpaceInstance(dim=2, p=4.0)
