"""Общие фикстуры тестов."""

import numpy as np
import pytest

from services.data import gen_phantoms
from services.sampling import cartesian_mask


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def complex_grid(rng):
    """Случайная комплексная сетка 6×5."""
    return rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))


@pytest.fixture(scope="session")
def phantoms16():
    return gen_phantoms(8, 16, 16, seed=3, threads=1)


@pytest.fixture(scope="session")
def full_mask16():
    """af = 1: все строки k-space."""
    return cartesian_mask(16, 16, 1.0, seed=0)


@pytest.fixture(scope="session")
def half_mask16():
    return cartesian_mask(16, 16, 2.0, seed=5)
