"""
Orbit functionals: L^p integrals of strong and weak orbits, Datko constants
over fractional-weighted initial data, and the semigroup bound M.

Infinite-horizon integrals carry an analytic tail bound from the modal
envelope ||T(t)x|| <= C e^{rt}, where r is the largest real part among the
eigenmodes the orbit actually excites.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from .config import get_settings
from .exceptions import PreconditionError
from .matfun import (
    as_complex_vector,
    dense_exponential,
    fractional_operator,
    operator_norm,
    orbit,
    propagators,
    require_stable,
    spectral_path_ok,
)
from .models.semistab_models import (
    DatkoCertificate,
    ExponentialCertificate,
    Generator,
    OnePointReport,
    ProbeResult,
    QuadratureResult,
    StrongStabilityReport,
    VerdictStatus,
)
from .quadrature import integrate_to_infinity

logger = structlog.get_logger(__name__)

Probe = Tuple[int, np.ndarray]
ProbePair = Tuple[int, np.ndarray, np.ndarray]

_ACTIVE = 1e-14


# ---------------------------------------------------------------------------
# Probes
# ---------------------------------------------------------------------------


def _random_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def probe_set(
    n: int, seed: Optional[int] = None, random_count: Optional[int] = None
) -> Tuple[List[Probe], str]:
    """Basis vectors followed by seeded random unit vectors."""
    settings = get_settings()
    seed = settings.probe_seed if seed is None else seed
    count = settings.random_probe_count if random_count is None else random_count
    rng = np.random.default_rng(seed)
    probes: List[Probe] = [(k, np.eye(n, dtype=np.complex128)[:, k]) for k in range(n)]
    probes.extend((n + j, _random_unit(rng, n)) for j in range(count))
    return probes, f"basis({n})+random({count}, seed={seed:#x})"


def probe_pairs(
    n: int, seed: Optional[int] = None, random_count: Optional[int] = None
) -> Tuple[List[ProbePair], str]:
    """Diagonal basis pairs (e_k, e_k) followed by seeded random pairs."""
    settings = get_settings()
    seed = settings.probe_seed if seed is None else seed
    count = min(8, settings.random_probe_count) if random_count is None else random_count
    rng = np.random.default_rng(seed)
    eye = np.eye(n, dtype=np.complex128)
    pairs: List[ProbePair] = [(k, eye[:, k], eye[:, k]) for k in range(n)]
    pairs.extend((n + j, _random_unit(rng, n), _random_unit(rng, n)) for j in range(count))
    return pairs, f"basis-pairs({n})+random-pairs({count}, seed={seed:#x})"


def _map_ordered(fn: Callable, items: Sequence, threads: Optional[int]) -> list:
    workers = threads or get_settings().threads
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Semigroup bound
# ---------------------------------------------------------------------------


def _propagator_norms(A: Generator, times: np.ndarray) -> np.ndarray:
    if A.spectral.normal:
        return np.max(np.exp(np.outer(times, A.spectral.eigenvalues.real)), axis=1)
    norms = []
    for start in range(0, len(times), 64):
        norms.append(np.atleast_1d(operator_norm(propagators(A, times[start:start + 64]))))
    return np.concatenate(norms)


def semigroup_bound(A: Generator, horizon: Optional[float] = None, samples: int = 256) -> float:
    """M = max ||e^{tA}|| over a sampled grid, extended until the norm drops below 1."""
    require_stable(A, "semigroup_bound")
    if horizon is None:
        horizon = 1.0 / abs(A.spectral_abscissa)
    M = 1.0
    start = 0.0
    for _ in range(60):
        times = np.linspace(start, horizon, samples)
        norms = _propagator_norms(A, times)
        M = max(M, float(norms.max()))
        if norms[-1] < 1.0:
            break
        start, horizon = horizon, 2.0 * horizon
    logger.debug("Semigroup bound", M=M, horizon=horizon)
    return M


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------


def _envelope(A: Generator, weights: np.ndarray) -> Tuple[float, float, float, float]:
    """(C, rate, fastest, spread) with ||orbit(t)|| <= C e^{rate t}.

    ``weights`` are modal amplitudes |c_k| times any observation factor.
    ``fastest`` is the largest |Re l| among active modes and ``spread`` the
    range of their imaginary parts.
    """
    eigenvalues = A.spectral.eigenvalues
    scale = float(np.max(weights)) if weights.size else 0.0
    active = weights > _ACTIVE * max(scale, 1e-300)
    if not np.any(active):
        return 0.0, A.spectral_abscissa, 1.0, 0.0
    rate = float(np.max(eigenvalues.real[active]))
    fastest = float(np.max(np.abs(eigenvalues.real[active])))
    imag = eigenvalues.imag[active]
    spread = float(imag.max() - imag.min())
    return float(np.sum(weights[active])), rate, fastest, spread


def _dense_envelope(A: Generator, norm_x: float) -> Tuple[float, float]:
    """Sampled envelope for generators without a usable eigenbasis."""
    rate = 0.5 * A.spectral_abscissa
    horizon = 40.0 / abs(A.spectral_abscissa)
    times = np.linspace(0.0, horizon, 512)
    norms = np.array([np.linalg.norm(dense_exponential(A, t), 2) for t in times])
    return float(np.max(norms * np.exp(-rate * times))) * norm_x, rate


def _infinite_integral(
    A: Generator,
    integrand: Callable[[np.ndarray], np.ndarray],
    C: float,
    rate: float,
    p: float,
    fastest: float,
    max_step: Optional[float],
    rel_tol: float,
) -> QuadratureResult:
    if C == 0.0:
        return QuadratureResult(value=0.0, error=0.0, nodes=0, tail_bound=0.0, horizon=0.0)

    def tail(T: float) -> float:
        return C**p * math.exp(p * rate * T) / (p * abs(rate))

    horizon = math.log(1.0 / rel_tol) / (p * abs(rate))
    outcome = integrate_to_infinity(
        integrand, tail, horizon,
        rel_tol=rel_tol, first_step=min(1.0, 1.0 / max(fastest, 1e-12)),
        max_step=max_step,
    )
    return QuadratureResult(
        value=max(float(np.real(outcome.value)), 0.0),
        error=outcome.error,
        nodes=outcome.nodes,
        tail_bound=outcome.tail_bound,
        horizon=outcome.horizon,
    )


# ---------------------------------------------------------------------------
# Orbit integrals
# ---------------------------------------------------------------------------


def orbit_lp_integral(
    A: Generator,
    x,
    p: float,
    rel_tol: Optional[float] = None,
    observation: Optional[np.ndarray] = None,
) -> QuadratureResult:
    """Integral of ||C e^{tA}x||^p over [0, inf) with a certified tail.

    ``observation`` is the matrix C; without it C = I.
    """
    require_stable(A, "orbit_lp_integral")
    if p < 1:
        raise PreconditionError(f"p must be >= 1, got {p}")
    rel_tol = rel_tol or get_settings().quadrature_rel_tol
    vec = as_complex_vector(x, A.dimension)
    C_obs = None
    gain = 1.0
    if observation is not None:
        C_obs = np.atleast_2d(np.asarray(observation, dtype=np.complex128))
        if C_obs.shape[1] != A.dimension:
            raise PreconditionError(
                f"observation has {C_obs.shape[1]} columns, expected {A.dimension}"
            )
        gain = float(np.linalg.norm(C_obs, 2))

    def integrand(t: np.ndarray) -> np.ndarray:
        states = orbit(A, t, vec)
        if C_obs is not None:
            states = states @ C_obs.T
        return np.linalg.norm(states, axis=1) ** p

    if spectral_path_ok(A):
        coefficients = np.abs(A.spectral.eigenvectors_inv @ vec)
        C, rate, fastest, spread = _envelope(A, coefficients)
        if A.spectral.normal:
            C = float(np.linalg.norm(coefficients))
        # ||x(t)|| is non-oscillatory only for normal A and C = I.
        if A.spectral.normal and C_obs is None:
            max_step = None
        else:
            max_step = 2.0 * math.pi / spread if spread > 0 else None
    else:
        C, rate = _dense_envelope(A, float(np.linalg.norm(vec)))
        fastest = float(np.linalg.norm(A.matrix, 2))
        max_step = 2.0 * math.pi / max(fastest, 1e-12)
    return _infinite_integral(A, integrand, C * gain, rate, p, fastest, max_step, rel_tol)


def weak_orbit_lp_integral(
    A: Generator, x, y, p: float, rel_tol: Optional[float] = None
) -> QuadratureResult:
    """Integral of |<e^{tA}x, y>|^p over [0, inf) with a certified tail."""
    require_stable(A, "weak_orbit_lp_integral")
    if p < 1:
        raise PreconditionError(f"p must be >= 1, got {p}")
    rel_tol = rel_tol or get_settings().quadrature_rel_tol
    xv = as_complex_vector(x, A.dimension, "x")
    yv = as_complex_vector(y, A.dimension, "y")

    def integrand(t: np.ndarray) -> np.ndarray:
        return np.abs(orbit(A, t, xv) @ yv.conj()) ** p

    if spectral_path_ok(A):
        coefficients = A.spectral.eigenvectors_inv @ xv
        observed = A.spectral.eigenvectors.T @ yv.conj()
        C, rate, fastest, spread = _envelope(A, np.abs(coefficients * observed))
        max_step = 2.0 * math.pi / spread if spread > 0 else None
    else:
        C, rate = _dense_envelope(A, float(np.linalg.norm(xv) * np.linalg.norm(yv)))
        fastest = float(np.linalg.norm(A.matrix, 2))
        max_step = 2.0 * math.pi / max(fastest, 1e-12)
    return _infinite_integral(A, integrand, C, rate, p, fastest, max_step, rel_tol)


# ---------------------------------------------------------------------------
# Datko constants
# ---------------------------------------------------------------------------


def exact_datko_constant(A: Generator, beta: float) -> float:
    """sup over all x of (int ||T(t)F x||^2)^(1/2) / ||x|| = sqrt(lambda_max(F* P F))."""
    from .lyapunov import lyap_direct, weighted_norm

    return math.sqrt(weighted_norm(lyap_direct(A).P, A, beta))


def datko_constant(
    A: Generator,
    beta: float,
    p: float,
    probes: Optional[Sequence[Probe]] = None,
    rel_tol: Optional[float] = None,
    threads: Optional[int] = None,
    M: Optional[float] = None,
) -> DatkoCertificate:
    """K = max over probes of (int ||T(t)(I-A)^(-beta) x||^p)^(1/p) / ||x||."""
    require_stable(A, "datko_constant")
    if p < 1:
        raise PreconditionError(f"p must be >= 1, got {p}")
    if probes is None:
        probes, descriptor = probe_set(A.dimension)
    else:
        probes = list(probes)
        descriptor = f"custom({len(probes)})"
    if not probes:
        raise PreconditionError("datko_constant needs at least one probe")

    F = fractional_operator(A, beta).matrix

    def one(probe: Probe) -> ProbeResult:
        probe_id, x = probe
        result = orbit_lp_integral(A, F @ x, p, rel_tol)
        norm_x = float(np.linalg.norm(x))
        ratio = result.value ** (1.0 / p) / norm_x if norm_x > 0 else 0.0
        return ProbeResult(
            probe_id=probe_id, value=result.value, error=result.error,
            tail_bound=result.tail_bound, ratio=ratio,
        )

    per_probe = sorted(_map_ordered(one, probes, threads), key=lambda r: r.probe_id)
    K = max(r.ratio for r in per_probe)
    cert = DatkoCertificate(
        p=p, beta=beta, K=K,
        M=semigroup_bound(A) if M is None else M,
        probes=descriptor, probe_count=len(per_probe), per_probe=per_probe,
    )
    if p == 2 and spectral_path_ok(A):
        cert.K_exact = exact_datko_constant(A, beta)
        cert.probe_coverage = K / cert.K_exact if cert.K_exact > 0 else 1.0
    logger.info(
        "Datko constant", dimension=A.dimension, beta=beta, p=p, K=K,
        K_exact=cert.K_exact, probes=len(per_probe),
    )
    return cert


def weak_datko_constant(
    A: Generator,
    beta: float,
    p: float,
    pairs: Optional[Sequence[ProbePair]] = None,
    rel_tol: Optional[float] = None,
    threads: Optional[int] = None,
) -> DatkoCertificate:
    """K_w = max over pairs of (int |<T(t)F x, y>|^p)^(1/p) / (||x|| ||y||)."""
    require_stable(A, "weak_datko_constant")
    if pairs is None:
        pairs, descriptor = probe_pairs(A.dimension)
    else:
        pairs = list(pairs)
        descriptor = f"custom-pairs({len(pairs)})"
    if not pairs:
        raise PreconditionError("weak_datko_constant needs at least one probe pair")

    F = fractional_operator(A, beta).matrix

    def one(pair: ProbePair) -> ProbeResult:
        probe_id, x, y = pair
        result = weak_orbit_lp_integral(A, F @ x, y, p, rel_tol)
        scale = float(np.linalg.norm(x) * np.linalg.norm(y))
        ratio = result.value ** (1.0 / p) / scale if scale > 0 else 0.0
        return ProbeResult(
            probe_id=probe_id, value=result.value, error=result.error,
            tail_bound=result.tail_bound, ratio=ratio,
        )

    per_probe = sorted(_map_ordered(one, pairs, threads), key=lambda r: r.probe_id)
    K = max(r.ratio for r in per_probe)
    logger.info("Weak Datko constant", dimension=A.dimension, beta=beta, p=p, K=K)
    return DatkoCertificate(
        p=p, beta=beta, K=K, M=semigroup_bound(A), probes=descriptor,
        probe_count=len(per_probe), weak=True, per_probe=per_probe,
    )


def weighted_propagator_norms(A: Generator, W: np.ndarray, times: Sequence[float]) -> np.ndarray:
    """||e^{tA} W|| for each t."""
    t = np.asarray(times, dtype=float)
    out = []
    for start in range(0, len(t), 64):
        stack = np.matmul(propagators(A, t[start:start + 64]), W)
        out.append(np.atleast_1d(operator_norm(stack)))
    return np.concatenate(out) if out else np.zeros(0)


def one_point_bound_check(
    A: Generator,
    beta: float,
    p: float,
    K: float,
    M: float,
    t_grid: Sequence[float],
    slack: Optional[float] = None,
) -> OnePointReport:
    """t ||T(t)(I-A)^(-beta)||^p <= K^p M^p on the grid."""
    slack = get_settings().check_slack if slack is None else slack
    F = fractional_operator(A, beta).matrix
    times = np.asarray(t_grid, dtype=float)
    lhs = times * weighted_propagator_norms(A, F, times) ** p
    bound = (K * M) ** p
    ratios = lhs / bound if bound > 0 else np.where(lhs > 0, np.inf, 0.0)
    worst = int(np.argmax(ratios))
    ratio = float(ratios[worst])
    return OnePointReport(
        bound=bound,
        max_violation_ratio=ratio,
        worst_time=float(times[worst]),
        status=VerdictStatus.PASS if ratio <= 1.0 + slack else VerdictStatus.FAIL,
    )


def converse_exponent_condition(alpha: float, beta: float, p: float) -> bool:
    """Orbits from D((-A)^beta) are L^p when ||T(t)A^-1|| = O(t^-alpha) and p > 1/(alpha beta)."""
    return alpha > 0 and beta > 0 and p > 1.0 / (alpha * beta)


# ---------------------------------------------------------------------------
# Classical exponential baseline and strong stability
# ---------------------------------------------------------------------------


def uniform_exponential_certificate(
    A: Generator,
    p: float = 2.0,
    rel_tol: Optional[float] = None,
    probes: Optional[Sequence[Probe]] = None,
) -> ExponentialCertificate:
    """Unweighted Datko constant K0 and the exponential bound it forces.

    With t0 = 2 K0^p M^p the one-point bound gives ||T(t0)|| <= 2^(-1/p), hence
    ||T(t)|| <= M 2^(-floor(t/t0)/p).
    """
    cert = datko_constant(A, 0.0, p, probes, rel_tol=rel_tol)
    K0 = cert.K_exact if cert.K_exact is not None else cert.K
    M = cert.M
    t0 = 2.0 * (K0 * M) ** p
    times = np.linspace(0.0, 5.0 * t0, 257)
    norms = weighted_propagator_norms(A, np.eye(A.dimension), times)
    bounds = M * 2.0 ** (-np.floor(times / t0) / p)
    ratio = float(np.max(norms / bounds))
    norm_at_t0 = float(weighted_propagator_norms(A, np.eye(A.dimension), [t0])[0])
    slack = get_settings().check_slack
    return ExponentialCertificate(
        p=p, K0=K0, M=M, t0=t0, rate=math.log(2.0) / (p * t0),
        norm_at_t0=norm_at_t0, max_violation_ratio=ratio,
        status=VerdictStatus.PASS if ratio <= 1.0 + slack else VerdictStatus.FAIL,
    )


def strong_stability_check(
    A: Generator,
    probes: Optional[Sequence[Probe]] = None,
    horizon: Optional[float] = None,
    tolerance: float = 1e-6,
) -> StrongStabilityReport:
    """||T(t)x|| / ||x|| falls below ``tolerance`` for every probe."""
    if probes is None:
        probes, _ = probe_set(A.dimension, random_count=4)
    if horizon is None:
        horizon = 40.0 / abs(A.spectral_abscissa) if A.stable else 1e3
    times = np.concatenate([[0.0], np.geomspace(1e-3, horizon, 400)])
    terminal: List[float] = []
    first: List[Optional[float]] = []
    for _, x in probes:
        norms = np.linalg.norm(orbit(A, times, x), axis=1) / np.linalg.norm(x)
        below = np.nonzero(norms <= tolerance)[0]
        first.append(float(times[below[0]]) if below.size else None)
        terminal.append(float(norms[-1]))
    passed = all(v <= tolerance for v in terminal)
    return StrongStabilityReport(
        horizon=horizon, tolerance=tolerance, terminal_norms=terminal,
        first_times=first,
        status=VerdictStatus.PASS if passed else VerdictStatus.FAIL,
    )
