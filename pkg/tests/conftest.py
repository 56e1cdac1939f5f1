"""
Shared fixtures for the stability laboratory tests.
"""

import numpy as np
import pytest

from src.config import reload_settings
from src.gallery import build_damped_wave, build_diagonal, damp
from src.matfun import make_generator
from src.models.semistab_models import DiagonalModelSpec


@pytest.fixture(autouse=True)
def fresh_settings():
    """Re-read SEMISTAB_* variables around every test."""
    settings = reload_settings()
    yield settings
    reload_settings()


@pytest.fixture
def scalar_decay():
    """A = [-1]."""
    return make_generator([[-1.0]], label="scalar")


@pytest.fixture
def non_normal():
    """Upper-triangular stable generator with a non-orthogonal eigenbasis."""
    return make_generator(np.array([[-1.0, 3.0], [0.0, -2.0]]), label="triangular")


@pytest.fixture
def diagonal_small():
    """Diagonal model N=10, a=1."""
    return build_diagonal(DiagonalModelSpec(N=10, a=1.0))


@pytest.fixture
def rotation_damped():
    """A = [i], B = [1], so A_B = [i - 1]."""
    return damp(make_generator([[1j]], label="rotation"), np.array([[1.0]]))


@pytest.fixture
def small_wave():
    """Damped wave with n=5 interior points and b = 1."""
    return build_damped_wave(5, 1.0)
