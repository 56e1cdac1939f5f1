"""
Unit tests for adaptive Gauss-Kronrod quadrature.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.exceptions import QuadratureBudgetError
from src.quadrature import geometric_breakpoints, integrate, integrate_to_infinity, partition


class TestIntegrate:
    """Test cases for finite-interval integration."""

    def test_polynomial_exact(self):
        """A cubic is integrated exactly by one panel."""
        outcome = integrate(lambda t: t**3, 0.0, 2.0, rel_tol=1e-12)
        assert outcome.value == pytest.approx(4.0, abs=1e-13)
        assert outcome.nodes == 15

    def test_array_valued(self):
        """Vector integrands are integrated componentwise."""
        outcome = integrate(
            lambda t: np.stack([np.cos(t), np.sin(t)], axis=1), 0.0, math.pi, rel_tol=1e-12
        )
        assert_allclose(outcome.value, [0.0, 2.0], atol=1e-11)

    def test_matrix_valued(self):
        """Matrix integrands keep their trailing shape."""
        outcome = integrate(
            lambda t: np.exp(-t)[:, None, None] * np.eye(2)[None, :, :], 0.0, 1.0, rel_tol=1e-12
        )
        assert_allclose(outcome.value, (1 - math.exp(-1.0)) * np.eye(2), atol=1e-12)

    def test_refines_oscillations(self):
        """Adaptive bisection resolves an oscillatory integrand."""
        outcome = integrate(lambda t: np.sin(50 * t) ** 2, 0.0, 10.0, rel_tol=1e-10)
        expected = 5.0 - math.sin(1000.0) / 200.0
        assert outcome.value == pytest.approx(expected, rel=1e-9)
        assert outcome.nodes > 15

    def test_empty_interval(self):
        """b <= a integrates to zero."""
        outcome = integrate(lambda t: np.ones_like(t), 1.0, 1.0, rel_tol=1e-10)
        assert outcome.value == 0.0

    def test_budget_exhausted(self):
        """A tiny node budget raises with the best estimate attached."""
        with pytest.raises(QuadratureBudgetError) as exc_info:
            integrate(lambda t: np.sin(1000 * t) ** 2, 0.0, 100.0, rel_tol=1e-12, node_budget=60)
        assert exc_info.value.error_code == 2
        assert exc_info.value.nodes <= 60


class TestPartition:
    """Test cases for initial panel layout."""

    def test_max_step_splits(self):
        """Each breakpoint interval is cut into pieces no longer than max_step."""
        panels = partition(0.0, 1.0, [0.5], max_step=0.2)
        assert len(panels) == 6
        assert panels[0][0] == 0.0 and panels[-1][1] == 1.0

    def test_geometric_breakpoints(self):
        """Breakpoints double from the first step up to the horizon."""
        assert geometric_breakpoints(10.0, 1.0) == [0.0, 1.0, 2.0, 4.0, 8.0, 10.0]


class TestIntegrateToInfinity:
    """Test cases for infinite horizons with a tail bound."""

    def test_exponential(self):
        """int_0^inf e^{-t} dt = 1."""
        outcome = integrate_to_infinity(
            lambda t: np.exp(-t), lambda T: math.exp(-T), 1.0, rel_tol=1e-10
        )
        assert outcome.value == pytest.approx(1.0, abs=1e-9)
        assert outcome.tail_bound <= 1e-10
        assert outcome.horizon >= 16.0

    def test_extension_limit(self):
        """A tail bound that never shrinks exhausts the extensions."""
        with pytest.raises(QuadratureBudgetError):
            integrate_to_infinity(
                lambda t: np.exp(-t), lambda T: 1.0, 1.0, rel_tol=1e-10, max_extensions=2
            )
