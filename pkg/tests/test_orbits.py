"""
Unit tests for orbit integrals and Datko constants.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.exceptions import PreconditionError
from src.gallery import build_damped_wave, build_diagonal
from src.matfun import inverse, make_generator, orbit
from src.models.semistab_models import DiagonalModelSpec, VerdictStatus
from src.orbits import (
    converse_exponent_condition,
    datko_constant,
    exact_datko_constant,
    one_point_bound_check,
    orbit_lp_integral,
    probe_pairs,
    probe_set,
    semigroup_bound,
    strong_stability_check,
    uniform_exponential_certificate,
    weak_datko_constant,
    weak_orbit_lp_integral,
    weighted_propagator_norms,
)


class TestProbes:
    """Test cases for probe generation."""

    def test_basis_then_random(self):
        """Basis vectors come first, random unit vectors after."""
        probes, descriptor = probe_set(3, seed=1, random_count=2)
        assert [pid for pid, _ in probes] == [0, 1, 2, 3, 4]
        assert_allclose(probes[1][1], [0, 1, 0])
        for _, x in probes[3:]:
            assert np.linalg.norm(x) == pytest.approx(1.0)
        assert "3" in descriptor

    def test_deterministic(self):
        """The same seed yields the same random probes."""
        first, _ = probe_set(4, seed=0x5EED, random_count=3)
        second, _ = probe_set(4, seed=0x5EED, random_count=3)
        for (_, a), (_, b) in zip(first, second):
            assert_allclose(a, b)

    def test_pairs(self):
        """Basis diagonal pairs plus a few random pairs."""
        pairs, _ = probe_pairs(3, seed=1, random_count=2)
        assert len(pairs) == 5
        assert_allclose(pairs[0][1], pairs[0][2])


class TestOrbitIntegrals:
    """Test cases for strong and weak L^p orbit integrals."""

    def test_scalar_p2(self, scalar_decay):
        """int e^{-2t} = 1/2."""
        result = orbit_lp_integral(scalar_decay, [1.0], 2.0)
        assert result.value == pytest.approx(0.5, abs=1e-9)
        assert result.tail_bound <= 1e-10

    def test_scalar_p1(self, scalar_decay):
        """int e^{-t} = 1."""
        assert orbit_lp_integral(scalar_decay, [1.0], 1.0).value == pytest.approx(1.0, abs=1e-9)

    def test_observed_orbit(self, scalar_decay):
        """int |2 e^{-t}|^2 = 2."""
        result = orbit_lp_integral(scalar_decay, [1.0], 2.0, observation=[[2.0]])
        assert result.value == pytest.approx(2.0, abs=1e-8)

    def test_non_normal_matches_lyapunov(self, non_normal):
        """int ||T(t)x||^2 = <P x, x> with A*P + PA = -I."""
        import scipy.linalg as sla

        P = sla.solve_continuous_lyapunov(non_normal.matrix.conj().T, -np.eye(2))
        x = np.array([0.3, 1.0])
        expected = float(np.real(np.vdot(x, P @ x)))
        assert orbit_lp_integral(non_normal, x, 2.0).value == pytest.approx(expected, rel=1e-8)

    def test_weak_scalar(self, scalar_decay):
        """int |<e^{-t}, 1>|^2 = 1/2."""
        assert weak_orbit_lp_integral(scalar_decay, [1.0], [1.0], 2.0).value == pytest.approx(0.5, abs=1e-9)

    def test_orthogonal_modes(self):
        """Distinct eigenvectors of a diagonal generator never pair."""
        A = make_generator(np.diag([-1.0, -2.0]))
        assert weak_orbit_lp_integral(A, [1.0, 0.0], [0.0, 1.0], 2.0).value == 0.0

    def test_weak_mixed_modes(self):
        """x = y = (e1 + e2)/sqrt(2): int ((e^-t + e^-2t)/2)^2 = 17/48."""
        A = make_generator(np.diag([-1.0, -2.0]))
        x = np.array([1.0, 1.0]) / math.sqrt(2.0)
        assert weak_orbit_lp_integral(A, x, x, 2.0).value == pytest.approx(17.0 / 48.0, rel=1e-9)

    def test_weak_below_strong(self, non_normal):
        """|<T(t)x, y>|^2 <= ||T(t)x||^2 ||y||^2 survives integration."""
        rng = np.random.default_rng(3)
        x = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        y = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        weak = weak_orbit_lp_integral(non_normal, x, y, 2.0).value
        strong = orbit_lp_integral(non_normal, x, 2.0).value
        assert weak <= strong * np.linalg.norm(y) ** 2 * (1.0 + 1e-8)

    def test_conservative_wave_keeps_norm(self):
        """Without damping the wave generator is skew and ||T(t)x|| = ||x||."""
        system = build_damped_wave(5, 0.0)
        x = np.random.default_rng(11).standard_normal(system.A.dimension)
        states = orbit(system.A, np.linspace(0.0, 10.0, 101), x)
        assert_allclose(np.linalg.norm(states, axis=1), np.linalg.norm(x), rtol=1e-10)

    def test_zero_vector(self, diagonal_small):
        """The zero orbit integrates to zero."""
        assert orbit_lp_integral(diagonal_small, np.zeros(10), 2.0).value == 0.0

    def test_requires_stability(self):
        """Conservative generators have no L^p orbits."""
        with pytest.raises(PreconditionError):
            orbit_lp_integral(make_generator([[1j]]), [1.0], 2.0)

    def test_p_below_one(self, scalar_decay):
        """p < 1 is outside the theory."""
        with pytest.raises(PreconditionError):
            orbit_lp_integral(scalar_decay, [1.0], 0.5)


class TestDatkoConstant:
    """Test cases for fractional-weighted Datko constants."""

    def test_scalar(self, scalar_decay):
        """K = (int e^{-2t}/4)^(1/2) = sqrt(1/8)."""
        cert = datko_constant(scalar_decay, 1.0, 2.0)
        assert cert.K == pytest.approx(math.sqrt(0.125), abs=1e-9)
        assert cert.K_exact == pytest.approx(math.sqrt(0.125), abs=1e-12)
        assert cert.probe_coverage == pytest.approx(1.0, abs=1e-8)
        assert cert.M == pytest.approx(1.0)

    def test_basis_probes_exact_for_diagonal(self, diagonal_small):
        """For a diagonal model the basis probes attain the supremum."""
        probes, _ = probe_set(10, random_count=0)
        cert = datko_constant(diagonal_small, 0.6, 2.0, probes=probes)
        assert cert.probe_coverage == pytest.approx(1.0, abs=1e-6)
        assert cert.probe_count == 10

    def test_probe_lower_bound(self, non_normal):
        """Probe maximisation never exceeds the exact supremum."""
        cert = datko_constant(non_normal, 0.5, 2.0)
        assert cert.K <= cert.K_exact * (1 + 1e-8)

    def test_monotone_in_beta(self, diagonal_small):
        """Larger beta shrinks the weight and the constant."""
        low = datko_constant(diagonal_small, 0.2, 2.0).K
        high = datko_constant(diagonal_small, 0.8, 2.0).K
        assert high < low

    def test_weak_scalar(self, scalar_decay):
        """Weak and strong constants coincide in dimension one."""
        cert = weak_datko_constant(scalar_decay, 1.0, 2.0)
        assert cert.weak
        assert cert.K == pytest.approx(math.sqrt(0.125), abs=1e-9)

    def test_empty_probes(self, scalar_decay):
        """At least one probe is required."""
        with pytest.raises(PreconditionError):
            datko_constant(scalar_decay, 1.0, 2.0, probes=[])

    @pytest.mark.slow
    def test_threshold_law(self):
        """K^2 is dimension-uniform for 2 beta > a and grows like N^(a - 2 beta) below."""
        values = {0.6: [], 0.4: []}
        for N in (50, 100, 200):
            A = build_diagonal(DiagonalModelSpec(N=N, a=1.0))
            probes, _ = probe_set(N, random_count=0)
            for beta in values:
                values[beta].append(datko_constant(A, beta, 2.0, probes=probes).K ** 2)
        uniform = [b / a for a, b in zip(values[0.6][:-1], values[0.6][1:])]
        growing = [b / a for a, b in zip(values[0.4][:-1], values[0.4][1:])]
        assert all(0.8 <= r <= 1.25 for r in uniform)
        for r in growing:
            assert r == pytest.approx(2.0**0.2, rel=0.2)


class TestBounds:
    """Test cases for M, one-point bounds and the exponential baseline."""

    def test_semigroup_bound_contractive(self, diagonal_small):
        """Contraction semigroups have M = 1."""
        assert semigroup_bound(diagonal_small) == pytest.approx(1.0)

    def test_semigroup_bound_transient(self):
        """Strong non-normality produces transient growth."""
        A = make_generator([[-1.0, 10.0], [0.0, -2.0]])
        assert semigroup_bound(A) > 2.0

    def test_one_point_scalar(self, scalar_decay):
        """t e^{-2t}/4 <= 1/8 on a grid."""
        report = one_point_bound_check(
            scalar_decay, 1.0, 2.0, math.sqrt(0.125), 1.0, np.linspace(0.0, 5.0, 101)
        )
        assert report.status == VerdictStatus.PASS
        assert report.worst_time == pytest.approx(0.5)
        assert report.max_violation_ratio == pytest.approx(0.5 * math.exp(-1.0) / 0.5)

    def test_one_point_violation(self, scalar_decay):
        """An undersized K is caught."""
        report = one_point_bound_check(scalar_decay, 1.0, 2.0, 0.05, 1.0, np.linspace(0.0, 5.0, 101))
        assert report.status == VerdictStatus.FAIL

    @pytest.mark.parametrize("a", [1.0, 2.0])
    def test_inverse_weighted_envelope(self, a):
        """||T(t)A^{-1}|| = max_k e^{-t k^-a} / |lambda_k| on the diagonal model."""
        A = build_diagonal(DiagonalModelSpec(N=50, a=a))
        k = np.arange(1, 51, dtype=float)
        modulus = np.abs(-(k**-a) + 1j * k)
        times = np.geomspace(0.1, 100.0, 25)
        expected = [np.max(np.exp(-t * k**-a) / modulus) for t in times]
        assert_allclose(weighted_propagator_norms(A, inverse(A), times), expected, rtol=1e-9)

    def test_exact_constant_bounds_probes(self, diagonal_small):
        """The Lyapunov supremum dominates every probe integral."""
        cert = datko_constant(diagonal_small, 0.5, 2.0)
        assert cert.K <= exact_datko_constant(diagonal_small, 0.5) * (1 + 1e-8)

    def test_converse_condition(self):
        """p > 1/(alpha beta)."""
        assert converse_exponent_condition(1.0, 0.6, 2.0)
        assert not converse_exponent_condition(1.0, 0.4, 2.0)

    def test_exponential_certificate(self, scalar_decay):
        """A = [-1]: K0^2 = 1/2, M = 1, t0 = 1."""
        cert = uniform_exponential_certificate(scalar_decay)
        assert cert.K0 ** 2 == pytest.approx(0.5)
        assert cert.t0 == pytest.approx(1.0)
        assert cert.norm_at_t0 == pytest.approx(math.exp(-1.0))
        assert cert.norm_at_t0 <= 2 ** -0.5
        assert cert.rate == pytest.approx(math.log(2.0) / 2.0)
        assert cert.status == VerdictStatus.PASS


class TestStrongStability:
    """Test cases for the strong stability check."""

    def test_diagonal_model(self, diagonal_small):
        """Every probe orbit decays."""
        assert strong_stability_check(diagonal_small).status == VerdictStatus.PASS

    def test_conservative(self):
        """A rotation keeps its norm."""
        report = strong_stability_check(make_generator([[1j]]))
        assert report.status == VerdictStatus.FAIL
        assert report.terminal_norms[0] == pytest.approx(1.0)
