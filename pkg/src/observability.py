"""
Observability Gramians and the route from observability to polynomial decay
of damped semigroups.

The damped generator is A_B = A - BB*. For contractive A the energy identity
d/dt ||z||^2 = 2 Re<A_B z, z> <= -2 ||B* z||^2 turns an observability estimate
||(I - A)^(-beta) x||^2 <= K int_0^tau ||B* T(t) x||^2 dt into an L^2 bound on
fractional orbits, and from there into decay of ||T_B(t) A_B^{-1}||.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import structlog

from .config import get_settings
from .decay import decay_fit
from .exceptions import PreconditionError
from .matfun import (
    as_complex_matrix,
    as_complex_vector,
    fractional_operator,
    inverse,
    orbit,
    propagators,
)
from .models.semistab_models import (
    ChainLink,
    DampedSystem,
    DampingComparison,
    DecayFit,
    Generator,
    Lemma41Report,
    NormEquivalence,
    ObservabilityCertificate,
    Thm42Verdict,
    VerdictStatus,
)
from .orbits import Probe, orbit_lp_integral, probe_set
from .quadrature import integrate

logger = structlog.get_logger(__name__)

_NEGLIGIBLE = 1e-14
DEFAULT_DECAY_WINDOW = (1.0, 100.0)


def _hermitian(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def _as_observation(C, n: int) -> np.ndarray:
    """Observation operator as a 2-D array; a 1-D input is one output row."""
    if np.ndim(C) == 1:
        C = np.reshape(C, (1, -1))
    C = as_complex_matrix(C, name="C")
    if C.shape[1] != n:
        raise PreconditionError(f"C has {C.shape[1]} columns, expected {n}")
    return C


def observation_gramian(A: Generator, C, tau: float, rel_tol: Optional[float] = None) -> np.ndarray:
    """int_0^tau e^{tA*} C*C e^{tA} dt."""
    if tau <= 0:
        raise PreconditionError(f"tau must be positive, got {tau}")
    C = _as_observation(C, A.dimension)
    rel_tol = rel_tol or get_settings().quadrature_rel_tol

    def integrand(t: np.ndarray) -> np.ndarray:
        observed = np.matmul(C[None, :, :], propagators(A, t))
        return np.matmul(observed.conj().transpose(0, 2, 1), observed)

    frequency = float(np.max(np.abs(A.spectral.eigenvalues.imag)))
    max_step = math.pi / frequency if frequency > 0 else None
    outcome = integrate(integrand, 0.0, tau, rel_tol=rel_tol, max_step=max_step)
    logger.debug("Gramian", dimension=A.dimension, tau=tau, nodes=outcome.nodes)
    return _hermitian(np.asarray(outcome.value))


def gramian(A: Generator, B, tau: float, rel_tol: Optional[float] = None) -> np.ndarray:
    """G_tau = int_0^tau e^{tA*} B B* e^{tA} dt."""
    B = as_complex_matrix(B, name="B")
    return observation_gramian(A, B.conj().T, tau, rel_tol)


def _certificate_from_gramian(
    A: Generator, G: np.ndarray, tau: float, beta: float, p: float = 2.0
) -> ObservabilityCertificate:
    eigenvalues, eigenvectors = sla.eigh(G)
    low, high = float(eigenvalues[0]), float(eigenvalues[-1])
    feasible = high > 0 and low >= get_settings().feasibility_threshold * high
    if not feasible:
        null = eigenvectors[:, 0]
        logger.warning("Gramian numerically singular", tau=tau, min_eig=low, max_eig=high)
        return ObservabilityCertificate(
            tau=tau, beta=beta, p=p, K=math.inf, gramian=G,
            gramian_min_eig=low, gramian_max_eig=high, feasible=False,
            null_direction=[(float(v.real), float(v.imag)) for v in null],
        )
    F = fractional_operator(A, beta).matrix
    pencil = sla.eigh(_hermitian(F.conj().T @ F), G, eigvals_only=True)
    return ObservabilityCertificate(
        tau=tau, beta=beta, p=p, K=float(pencil[-1]), gramian=G,
        gramian_min_eig=low, gramian_max_eig=high,
        min_generalized_eigenvalue=float(pencil[0]), feasible=True,
    )


def _check_beta(beta: float) -> None:
    if not 0 < beta <= 1:
        raise PreconditionError(f"beta must lie in (0, 1], got {beta}")


def obs_constant(
    A: Generator, B, tau: float, beta: float, rel_tol: Optional[float] = None
) -> ObservabilityCertificate:
    """Smallest K with ||(I - A)^(-beta) x||^2 <= K <G_tau x, x> for all x."""
    _check_beta(beta)
    cert = _certificate_from_gramian(A, gramian(A, B, tau, rel_tol), tau, beta)
    logger.info("Observability constant", tau=tau, beta=beta, K=cert.K, feasible=cert.feasible)
    return cert


def _quadratic_form(G: np.ndarray, x: np.ndarray) -> float:
    return float(np.real(np.vdot(x, G @ x)))


def damping_comparison(
    system: DampedSystem,
    tau: float,
    probes: Optional[Sequence[Probe]] = None,
    rel_tol: Optional[float] = None,
) -> DampingComparison:
    """max over probes of int ||B* e^{tA} x||^2 / int ||B* e^{tA_B} x||^2 on [0, tau]."""
    if probes is None:
        probes, _ = probe_set(system.A.dimension)
    undamped = gramian(system.A, system.B, tau, rel_tol)
    damped = gramian(system.A_B, system.B, tau, rel_tol)

    c_emp, excluded = 0.0, 0
    violating: List[int] = []
    for probe_id, x in probes:
        numerator = _quadratic_form(undamped, x)
        denominator = _quadratic_form(damped, x)
        if numerator < _NEGLIGIBLE and denominator < _NEGLIGIBLE:
            excluded += 1
            continue
        if denominator < _NEGLIGIBLE:
            violating.append(probe_id)
            continue
        c_emp = max(c_emp, numerator / denominator)

    c_exact = None
    spectrum = sla.eigvalsh(damped)
    if spectrum[-1] > 0 and spectrum[0] >= get_settings().feasibility_threshold * spectrum[-1]:
        c_exact = float(sla.eigh(undamped, damped, eigvals_only=True)[-1])
    if violating:
        logger.error("Damped observation vanishes where the undamped one does not",
                     probes=violating)
    return DampingComparison(
        tau=tau, c_emp=c_emp, c_exact=c_exact, probe_count=len(probes),
        excluded=excluded, violated=bool(violating), violating_probes=violating,
    )


def dissipation_check(system: DampedSystem, x, t_grid: Sequence[float]) -> float:
    """max over the grid of 2 Re<A_B z, z> + 2 ||B* z||^2 with z(t) = e^{tA_B} x."""
    A_B = system.A_B
    states = orbit(A_B, t_grid, as_complex_vector(x, A_B.dimension))
    drift = 2.0 * np.real(np.sum(states.conj() * (states @ A_B.matrix.T), axis=1))
    observed = 2.0 * np.sum(np.abs(states @ system.B.conj()) ** 2, axis=1)
    return float(np.max(drift + observed))


def energy_budget_check(system: DampedSystem, x, horizons: Sequence[float]) -> float:
    """max over T of int_0^T ||sqrt(2) B* z||^2 - (||x||^2 - ||z(T)||^2)."""
    A_B = system.A_B
    vec = as_complex_vector(x, A_B.dimension)
    C = math.sqrt(2.0) * system.B.conj().T
    worst = -math.inf
    for T in horizons:
        G = observation_gramian(A_B, C, float(T))
        spent = _quadratic_form(G, vec)
        remaining = float(np.linalg.norm(orbit(A_B, [T], vec)[0]) ** 2)
        worst = max(worst, spent - (float(np.linalg.norm(vec)) ** 2 - remaining))
    return worst


def norm_equivalence(A: Generator, A_B: Generator, beta: float) -> NormEquivalence:
    """Constants c with ||F_beta(A_B) x|| <= c ||F_beta(A) x|| and conversely."""
    F_A = fractional_operator(A, beta).matrix
    F_B = fractional_operator(A_B, beta).matrix
    forward = sla.solve(F_A.T, F_B.T).T
    backward = sla.solve(F_B.T, F_A.T).T
    return NormEquivalence(
        beta=beta,
        damped_over_undamped=float(np.linalg.norm(forward, 2)),
        undamped_over_damped=float(np.linalg.norm(backward, 2)),
    )


# ---------------------------------------------------------------------------
# Observability -> Datko -> decay
# ---------------------------------------------------------------------------


def _probe_obs_constant(
    A: Generator, C: np.ndarray, tau: float, beta: float, p: float,
    probes: Sequence[Probe], rel_tol: float,
) -> float:
    """Lower bound for K at p != 2: max over probes of ||F x||^p / int_0^tau ||C T x||^p."""
    F = fractional_operator(A, beta).matrix
    K = 0.0
    for _, x in probes:
        def integrand(t: np.ndarray, x=x) -> np.ndarray:
            return np.linalg.norm(orbit(A, t, x) @ C.T, axis=1) ** p

        observed = float(np.real(integrate(integrand, 0.0, tau, rel_tol=rel_tol).value))
        weighted = float(np.linalg.norm(F @ x)) ** p
        K = max(K, weighted / observed if observed > 0 else math.inf)
    return K


def _link(name: str, lhs: float, rhs: float, slack: float, detail: str = "") -> ChainLink:
    passed = lhs <= rhs + slack * max(rhs, 1.0)
    return ChainLink(
        name=name, lhs=lhs, rhs=rhs, detail=detail,
        status=VerdictStatus.PASS if passed else VerdictStatus.FAIL,
    )


def lemma41_pipeline(
    A_sys: Generator,
    C_obs,
    beta: float,
    p: float,
    tau: float,
    probes: Optional[Sequence[Probe]] = None,
    decay_window: Tuple[float, float] = DEFAULT_DECAY_WINDOW,
    rel_tol: Optional[float] = None,
) -> Lemma41Report:
    """Run the chain observability -> Datko bound -> energy budget -> decay fit.

    Links, in order:

    - ``observability``: a finite K with ||F x||^p <= K int_0^tau ||C T(t) x||^p
    - ``datko_bound``: int_0^inf ||T(t) F x||^p <= K tau ||x||^p on every probe
    - ``energy_budget``: int_0^inf ||C T(t) x||^p <= ||x||^p on every probe

    The decay fit of ||T(t) A^{-1}|| is attached for comparison with -1/(p beta).
    For p != 2 the constant comes from probe maximisation and is a lower bound.
    """
    _check_beta(beta)
    if p < 1:
        raise PreconditionError(f"p must be >= 1, got {p}")
    settings = get_settings()
    rel_tol = rel_tol or settings.quadrature_rel_tol
    slack = settings.check_slack
    C = _as_observation(C_obs, A_sys.dimension)
    if probes is None:
        probes, _ = probe_set(A_sys.dimension, random_count=min(settings.random_probe_count, 8))
    predicted = -1.0 / (p * beta)

    cert = _certificate_from_gramian(A_sys, observation_gramian(A_sys, C, tau, rel_tol), tau, beta, p)
    if cert.feasible and p != 2:
        cert.K = _probe_obs_constant(A_sys, C, tau, beta, p, probes, rel_tol)

    links: List[ChainLink] = [
        ChainLink(
            name="observability", lhs=cert.K, rhs=math.inf,
            status=VerdictStatus.PASS if cert.feasible else VerdictStatus.FAIL,
            detail=f"min Gramian eigenvalue {cert.gramian_min_eig:.3e}",
        )
    ]
    if not cert.feasible:
        logger.warning("Observability link failed", beta=beta, tau=tau)
        return Lemma41Report(
            beta=beta, p=p, tau=tau, obs_constant=cert, links=links,
            first_failure="observability", predicted_slope=predicted,
            status=VerdictStatus.FAIL,
        )

    F = fractional_operator(A_sys, beta).matrix
    datko_worst, budget_worst = 0.0, 0.0
    for _, x in probes:
        norm_p = float(np.linalg.norm(x)) ** p
        weighted = orbit_lp_integral(A_sys, F @ x, p, rel_tol).value
        observed = orbit_lp_integral(A_sys, x, p, rel_tol, observation=C).value
        datko_worst = max(datko_worst, weighted / norm_p)
        budget_worst = max(budget_worst, observed / norm_p)
    links.append(_link("datko_bound", datko_worst, cert.K * tau, slack,
                       f"{len(probes)} probes"))
    links.append(_link("energy_budget", budget_worst, 1.0, slack, f"{len(probes)} probes"))

    decay: Optional[DecayFit] = None
    try:
        decay = decay_fit(A_sys, inverse(A_sys), decay_window)
    except PreconditionError as e:
        logger.warning("Decay fit skipped", error=str(e))

    first_failure = next((link.name for link in links if link.status != VerdictStatus.PASS), None)
    logger.info("Observability chain", beta=beta, p=p, tau=tau, first_failure=first_failure)
    return Lemma41Report(
        beta=beta, p=p, tau=tau, obs_constant=cert, links=links,
        first_failure=first_failure, decay=decay, predicted_slope=predicted,
        status=VerdictStatus.PASS if first_failure is None else VerdictStatus.FAIL,
    )


def thm42_verdict(
    system: DampedSystem,
    beta: float,
    tau: float,
    probes: Optional[Sequence[Probe]] = None,
    decay_window: Tuple[float, float] = DEFAULT_DECAY_WINDOW,
    rel_tol: Optional[float] = None,
) -> Thm42Verdict:
    """Undamped observability at (tau, beta) implies decay of the damped semigroup.

    The undamped constant K transfers to the damped observation C = sqrt(2) B*
    as rho^2 K c / 2, where c bounds the undamped/damped Gramian ratio and rho
    the weighted-norm equivalence between A and A_B.
    """
    _check_beta(beta)
    if not system.A.contractive:
        raise PreconditionError("undamped generator must be contractive")
    hypothesis = obs_constant(system.A, system.B, tau, beta, rel_tol)
    comparison = damping_comparison(system, tau, probes, rel_tol)
    equivalence = norm_equivalence(system.A, system.A_B, beta)
    predicted = -1.0 / (2.0 * beta)

    if not hypothesis.feasible or comparison.violated:
        logger.warning("Observability hypothesis not verified", beta=beta, tau=tau)
        return Thm42Verdict(
            beta=beta, tau=tau, hypothesis=hypothesis, comparison=comparison,
            norm_equivalence=equivalence, transferred_constant=math.inf,
            predicted_slope=predicted, status=VerdictStatus.FAIL,
        )

    c = comparison.c_exact if comparison.c_exact is not None else comparison.c_emp
    transferred = equivalence.damped_over_undamped ** 2 * hypothesis.K * c / 2.0
    C = math.sqrt(2.0) * system.B.conj().T
    pipeline = lemma41_pipeline(
        system.A_B, C, beta, 2.0, tau, probes=probes,
        decay_window=decay_window, rel_tol=rel_tol,
    )
    transfer_ok = pipeline.obs_constant.K <= transferred * (1.0 + get_settings().check_slack)
    if not transfer_ok:
        logger.warning(
            "Damped constant exceeds transferred bound",
            damped=pipeline.obs_constant.K, transferred=transferred,
        )
    observed = pipeline.decay.slope if pipeline.decay is not None else None
    status = VerdictStatus.PASS if pipeline.status == VerdictStatus.PASS and transfer_ok else VerdictStatus.FAIL
    logger.info("Damped decay verdict", beta=beta, tau=tau, status=status.value, slope=observed)
    return Thm42Verdict(
        beta=beta, tau=tau, hypothesis=hypothesis, comparison=comparison,
        norm_equivalence=equivalence, transferred_constant=transferred,
        pipeline=pipeline, observed_slope=observed, predicted_slope=predicted,
        status=status,
    )
