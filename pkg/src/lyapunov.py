"""
Lyapunov operators P = int_0^inf T(t)* T(t) dt and their weighted certificates.

The antidual pairing on D((-A)^beta) is realised as the F_beta-weighted form,
F_beta = (I - A)^(-beta): boundedness of P from the fractional domain into its
antidual is measured by ||F_beta* P F_beta||, and the Lyapunov identity is
tested on the (beta+1)-weighted space.
"""

import math
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import structlog

from .config import get_settings
from .exceptions import LyapunovSingularError, PreconditionError
from .matfun import (
    dense_exponential,
    fractional_operator,
    propagators,
    require_stable,
    spectral_path_ok,
)
from .models.semistab_models import (
    Construction,
    Cor33Report,
    DimensionSweepRow,
    Generator,
    LyapunovCertificate,
    Prop31Report,
    VerdictStatus,
)
from .orbits import datko_constant
from .quadrature import integrate_to_infinity

logger = structlog.get_logger(__name__)

UNIFORM_BAND = (0.8, 1.25)


def _residual(A: np.ndarray, P: np.ndarray) -> np.ndarray:
    return A.conj().T @ P + P @ A + np.eye(A.shape[0])


def _certificate(
    A: Generator, P: np.ndarray, construction: Construction, solver: str,
    quadrature_error: Optional[float] = None,
) -> LyapunovCertificate:
    norm = max(np.linalg.norm(P, "fro"), np.finfo(float).tiny)
    asymmetry = float(np.linalg.norm(P - P.conj().T, "fro") / norm)
    P = 0.5 * (P + P.conj().T)
    residual = float(np.linalg.norm(_residual(A.matrix, P), "fro"))
    margin = float(sla.eigvalsh(P)[0])
    if residual > 1e-8 * norm and construction == Construction.DIRECT:
        logger.warning("Lyapunov residual above tolerance", residual=residual, norm=float(norm))
    return LyapunovCertificate(
        P=P, residual=residual, asymmetry=asymmetry, positivity_margin=margin,
        construction=construction, solver=solver, quadrature_error=quadrature_error,
    )


def lyap_direct(A: Generator) -> LyapunovCertificate:
    """Solve A*P + PA = -I.

    In eigen-coordinates A = V diag(l) V^-1 the equation decouples into
    P~_jk = -Q_jk / (conj(l_j) + l_k) with Q = V* V and P = V^-* P~ V^-1.
    Ill-conditioned bases use the dense Bartels-Stewart solver instead.
    """
    require_stable(A, "lyap_direct")
    if spectral_path_ok(A):
        lam = A.spectral.eigenvalues
        V = A.spectral.eigenvectors
        W = A.spectral.eigenvectors_inv
        denominator = lam.conj()[:, None] + lam[None, :]
        smallest = float(np.min(np.abs(denominator)))
        if smallest <= get_settings().singularity_tolerance * max(np.max(np.abs(lam)), 1.0):
            raise LyapunovSingularError(
                f"conj(l_j) + l_k = {smallest:.3e} is numerically zero",
                details={"min_denominator": smallest},
            )
        P_tilde = -(V.conj().T @ V) / denominator
        P = W.conj().T @ P_tilde @ W
        solver = "eigen"
    else:
        P = sla.solve_continuous_lyapunov(A.matrix.conj().T, -np.eye(A.dimension))
        solver = "schur"
    cert = _certificate(A, P, Construction.DIRECT, solver)
    logger.debug("Lyapunov direct solve", dimension=A.dimension, solver=solver, residual=cert.residual)
    return cert


def frobenius_tail(C: float, rate: float, n: int) -> Callable[[float], float]:
    """Bound on the Frobenius norm of int_T^inf e^{tA*} e^{tA} dt when ||e^{tA}|| <= C e^{rate t}.

    The operator-norm bound C^2 e^{2 rate T} / (2|rate|) is scaled by sqrt(n).
    """

    def tail(T: float) -> float:
        return math.sqrt(n) * C**2 * math.exp(2.0 * rate * T) / (2.0 * abs(rate))

    return tail


def lyap_quadrature(A: Generator, rel_tol: float = 1e-8) -> LyapunovCertificate:
    """P = int_0^inf e^{tA*} e^{tA} dt by adaptive quadrature with a certified tail."""
    require_stable(A, "lyap_quadrature")
    omega = A.spectral_abscissa

    def integrand(t: np.ndarray) -> np.ndarray:
        E = propagators(A, t)
        return np.matmul(E.conj().transpose(0, 2, 1), E)

    if spectral_path_ok(A):
        C, rate = A.spectral.condition, omega
    else:
        rate = 0.5 * omega
        times = np.linspace(0.0, 40.0 / abs(omega), 512)
        C = max(
            float(np.linalg.norm(dense_exponential(A, t), 2) * math.exp(-rate * t))
            for t in times
        )

    tail = frobenius_tail(C, rate, A.dimension)

    max_step = None
    if not A.spectral.normal:
        imag = A.spectral.eigenvalues.imag
        spread = float(imag.max() - imag.min())
        max_step = 2.0 * math.pi / spread if spread > 0 else None
    fastest = float(np.max(np.abs(A.spectral.eigenvalues.real)))

    outcome = integrate_to_infinity(
        integrand, tail, math.log(1.0 / rel_tol) / (2.0 * abs(rate)),
        rel_tol=rel_tol, first_step=min(1.0, 1.0 / fastest), max_step=max_step,
    )
    cert = _certificate(
        A, np.asarray(outcome.value), Construction.QUADRATURE, "gauss-kronrod",
        quadrature_error=outcome.error + outcome.tail_bound,
    )
    logger.debug("Lyapunov quadrature", dimension=A.dimension, nodes=outcome.nodes)
    return cert


def weighted_norm(P: np.ndarray, A: Generator, beta: float) -> float:
    """||F_beta* P F_beta|| with F_beta = (I - A)^(-beta)."""
    F = fractional_operator(A, beta).matrix
    weighted = F.conj().T @ P @ F
    weighted = 0.5 * (weighted + weighted.conj().T)
    return float(np.max(np.abs(sla.eigvalsh(weighted))))


def weighted_certificate(
    cert: LyapunovCertificate, A: Generator, betas: Iterable[float]
) -> LyapunovCertificate:
    """Copy of ``cert`` with the beta -> ||F_beta* P F_beta|| table filled in."""
    table = dict(cert.weighted_norms)
    for beta in betas:
        table[float(beta)] = weighted_norm(cert.P, A, beta)
    return cert.model_copy(update={"weighted_norms": table})


def lyap_residual_weighted(cert: LyapunovCertificate, A: Generator, beta: float) -> float:
    """||F_{beta+1}* (A*P + PA + I) F_{beta+1}||_F."""
    F = fractional_operator(A, beta + 1.0).matrix
    return float(np.linalg.norm(F.conj().T @ _residual(A.matrix, cert.P) @ F, "fro"))


def prop31_roundtrip(
    A: Generator,
    beta: float,
    p: float = 2.0,
    rel_tol: float = 1e-8,
    check_uniqueness: bool = True,
) -> Prop31Report:
    """Finite Datko constant <=> positive, bounded P solving the weighted identity."""
    if p != 2:
        raise PreconditionError("the Datko/Lyapunov equivalence is stated for p = 2")
    datko = datko_constant(A, beta, p)
    direct = weighted_certificate(lyap_direct(A), A, [beta])
    weighted = direct.weighted_norms[float(beta)]
    weighted_residual = lyap_residual_weighted(direct, A, beta)
    scale = max(np.linalg.norm(direct.P, "fro"), 1.0)

    gap = 0.0
    if check_uniqueness:
        quad = lyap_quadrature(A, rel_tol=rel_tol)
        gap = float(np.linalg.norm(quad.P - direct.P, "fro") / scale)
    agree = gap <= max(1e-5, 10.0 * rel_tol)

    datko_finite = bool(np.isfinite(datko.K))
    identity_ok = True
    if datko.K_exact is not None:
        identity_ok = abs(datko.K_exact**2 - weighted) <= 1e-8 * max(weighted, 1.0)
    lyapunov_ok = (
        weighted_residual <= 1e-8 * scale
        and direct.positivity_margin >= -1e-10
        and np.isfinite(weighted)
    )
    passed = datko_finite == lyapunov_ok and datko_finite and agree and identity_ok
    return Prop31Report(
        beta=beta, datko_K=datko.K, datko_finite=datko_finite,
        weighted_norm=weighted, weighted_residual=weighted_residual,
        unweighted_residual=direct.residual,
        positivity_margin=direct.positivity_margin,
        constructions_agree=agree, construction_gap=gap,
        status=VerdictStatus.PASS if passed else VerdictStatus.FAIL,
    )


def dimension_ratios(values: Sequence[float]) -> List[float]:
    """Successive ratios v[i+1] / v[i]."""
    return [b / a if a != 0 else math.inf for a, b in zip(values[:-1], values[1:])]


def _uniform(ratios: Sequence[float], band=UNIFORM_BAND) -> bool:
    return all(band[0] <= r <= band[1] for r in ratios)


def cor33_converse(
    builder: Callable[[int], Generator],
    dimensions: Sequence[int],
    alpha_observed: float,
    beta: float,
) -> Cor33Report:
    """For beta > 2/alpha the Datko and weighted Lyapunov constants stay dimension-uniform."""
    threshold = 2.0 / alpha_observed
    if beta <= threshold:
        raise PreconditionError(
            f"converse needs beta > 2/alpha = {threshold:.4g}, got beta = {beta}",
            details={"threshold": threshold, "beta": beta},
        )
    datko_rows: List[DimensionSweepRow] = []
    weighted_rows: List[DimensionSweepRow] = []
    for dimension in sorted(dimensions):
        A = builder(dimension)
        cert = datko_constant(A, beta, 2.0)
        datko_rows.append(DimensionSweepRow(dimension=dimension, value=cert.K))
        weighted = weighted_norm(lyap_direct(A).P, A, beta)
        weighted_rows.append(DimensionSweepRow(dimension=dimension, value=weighted))
    datko_ratios = dimension_ratios([r.value for r in datko_rows])
    weighted_ratios = dimension_ratios([r.value for r in weighted_rows])
    passed = _uniform(datko_ratios) and _uniform(weighted_ratios)
    logger.info(
        "Converse check", alpha=alpha_observed, beta=beta, passed=passed,
        datko_ratios=datko_ratios, weighted_ratios=weighted_ratios,
    )
    return Cor33Report(
        alpha=alpha_observed, beta=beta, threshold=threshold,
        datko=datko_rows, weighted=weighted_rows,
        datko_ratios=datko_ratios, weighted_ratios=weighted_ratios,
        status=VerdictStatus.PASS if passed else VerdictStatus.FAIL,
    )
