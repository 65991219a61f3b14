"""Shared fixtures."""

import numpy as np
import pytest

from spin_mor.core.spin_algebra import make_spin_ops


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def spin_half():
    return make_spin_ops(0.5)


@pytest.fixture
def spin_one():
    return make_spin_ops(1)


def random_unit(rng, n):
    """Random complex unit vector of length n."""
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def random_direction(rng):
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)
