"""
Decay-exponent estimation and resolvent growth along the imaginary axis.

Power laws are straight lines in log-log coordinates, so both time and
frequency samples are logarithmically spaced. A finite-dimensional generator
with negative spectral abscissa always decays exponentially eventually; the
contamination flag marks fits whose window has reached that regime.
"""

import math
from typing import Optional, Sequence, Tuple

import numpy as np
import structlog

from .config import get_settings
from .exceptions import PreconditionError, SingularityError
from .matfun import (
    as_complex_matrix,
    fractional_operator,
    inverse,
    orbit,
    require_stable,
    resolvent_matrix,
    resolvent_norm,
)
from .models.semistab_models import (
    CorrespondenceReport,
    DecayFit,
    DiagonalModelSpec,
    Generator,
    HolderReport,
    ResolventSweep,
    VerdictStatus,
)
from .orbits import weighted_propagator_norms

logger = structlog.get_logger(__name__)

Window = Tuple[float, float]


def log_grid(window: Window, samples_per_decade: Optional[int] = None) -> np.ndarray:
    """Logarithmically spaced points covering ``window``."""
    lo, hi = window
    if not 0 < lo < hi:
        raise PreconditionError(f"window must satisfy 0 < t0 < t1, got {window}")
    per_decade = samples_per_decade or get_settings().samples_per_decade
    count = max(8, int(math.ceil(math.log10(hi / lo) * per_decade)) + 1)
    return np.geomspace(lo, hi, count)


def _line_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - float(np.sum((y - predicted) ** 2)) / total if total > 0 else 1.0
    return float(slope), float(intercept), min(max(r_squared, 0.0), 1.0)


def _tail_mask(log_t: np.ndarray) -> np.ndarray:
    """Last decade of the window, or its upper half when the window is shorter."""
    span = log_t[-1] - log_t[0]
    width = math.log(10.0) if span >= 2.0 * math.log(10.0) else 0.5 * span
    return log_t >= log_t[-1] - width


def fit_power_law(times: np.ndarray, norms: np.ndarray, window: Window) -> DecayFit:
    """Log-log fit; contaminated when the tail slope differs from the overall slope in magnitude."""
    settings = get_settings()
    floor = np.finfo(float).tiny
    log_t = np.log(times)
    log_n = np.log(np.maximum(norms, floor))
    slope, intercept, r_squared = _line_fit(log_t, log_n)
    tail = _tail_mask(log_t)
    tail_slope = _line_fit(log_t[tail], log_n[tail])[0] if tail.sum() >= 2 else slope
    contaminated = abs(slope - tail_slope) > settings.contamination_threshold
    if contaminated:
        logger.warning(
            "Exponential contamination in decay window",
            window=window, slope=slope, tail_slope=tail_slope,
        )
    return DecayFit(
        window=tuple(window), sample_count=len(times), slope=slope,
        intercept=intercept, r_squared=r_squared, tail_slope=tail_slope,
        contaminated=bool(contaminated),
        samples=[(float(t), float(n)) for t, n in zip(times, norms)],
    )


def dominant_mode_index(spec: DiagonalModelSpec, t: float) -> float:
    """Maximiser k* = (a t)^(1/a) of e^{-t k^-a} / k for the diagonal family."""
    return (spec.a * t) ** (1.0 / spec.a)


def decay_weight(A: Generator, kind: str = "inverse", beta: float = 1.0) -> np.ndarray:
    """A^{-1} (``inverse``) or (I - A)^(-beta) (``fractional``)."""
    if kind == "inverse":
        return inverse(A)
    if kind == "fractional":
        return fractional_operator(A, beta).matrix
    raise PreconditionError(f"unknown weight kind {kind!r}")


def decay_fit(
    A: Generator,
    W,
    window: Window,
    samples_per_decade: Optional[int] = None,
    mode_guard: Optional[DiagonalModelSpec] = None,
) -> DecayFit:
    """Least-squares slope of log ||e^{tA} W|| against log t."""
    require_stable(A, "decay_fit")
    W = as_complex_matrix(W, square=True, name="W")
    if W.shape[0] != A.dimension:
        raise PreconditionError(f"W has dimension {W.shape[0]}, expected {A.dimension}")
    times = log_grid(window, samples_per_decade)
    norms = weighted_propagator_norms(A, W, times)
    fit = fit_power_law(times, norms, window)
    if mode_guard is not None:
        fit.dimension_guard_ok = dominant_mode_index(mode_guard, window[1]) <= mode_guard.N
    logger.info(
        "Decay fit", dimension=A.dimension, window=window, slope=fit.slope,
        contaminated=fit.contaminated,
    )
    return fit


def orbit_decay_fit(
    A: Generator, x, window: Window, samples_per_decade: Optional[int] = None
) -> DecayFit:
    """Slope of log ||e^{tA} x|| for a single initial value."""
    require_stable(A, "orbit_decay_fit")
    times = log_grid(window, samples_per_decade)
    norms = np.linalg.norm(orbit(A, times, x), axis=1)
    return fit_power_law(times, norms, window)


def resolvent_sweep(A: Generator, s_grid: Sequence[float]) -> ResolventSweep:
    """||(is - A)^{-1}|| along the grid and its log-log growth exponent."""
    samples = []
    excluded = []
    for s in s_grid:
        try:
            samples.append((float(s), resolvent_norm(A, 1j * float(s))))
        except SingularityError:
            logger.warning("Frequency on the spectrum, excluded", s=float(s))
            excluded.append(float(s))
    usable = [(s, v) for s, v in samples if s != 0 and np.isfinite(v)]
    if len(usable) >= 2:
        x = np.log(np.abs([s for s, _ in usable]))
        y = np.log([v for _, v in usable])
        exponent, intercept, _ = _line_fit(x, y)
    else:
        exponent, intercept = float("nan"), float("nan")
    frequencies = [abs(s) for s, _ in usable] or [0.0]
    logger.info("Resolvent sweep", samples=len(samples), exponent=exponent)
    return ResolventSweep(
        window=(min(frequencies), max(frequencies)), exponent=exponent,
        intercept=intercept, samples=samples, excluded=excluded,
    )


def holder_halfplane_check(
    A: Generator,
    beta: float,
    p: float,
    lambda_grid: Sequence[complex],
    K_w: float,
    slack: Optional[float] = None,
) -> HolderReport:
    """||(l - A)^{-1}(I - A)^{-beta}|| (q Re l)^{1/q} <= K_w on the right half-plane.

    For p = 1 the bound is flat: ||(l - A)^{-1}(I - A)^{-beta}|| <= K_w.
    """
    if p < 1:
        raise PreconditionError(f"p must be >= 1, got {p}")
    slack = get_settings().check_slack if slack is None else slack
    F = fractional_operator(A, beta).matrix
    q = p / (p - 1.0) if p > 1 else None
    worst_ratio, worst_point = 0.0, (0.0, 0.0)
    for lam in lambda_grid:
        lam = complex(lam)
        if lam.real <= 0:
            raise PreconditionError(f"lambda must lie in the right half-plane, got {lam}")
        norm = float(np.linalg.norm(resolvent_matrix(A, lam) @ F, 2))
        factor = (q * lam.real) ** (1.0 / q) if q is not None else 1.0
        ratio = norm * factor / K_w if K_w > 0 else math.inf
        if ratio > worst_ratio:
            worst_ratio, worst_point = ratio, (lam.real, lam.imag)
    return HolderReport(
        p=p, q=q, K_w=K_w, max_ratio=worst_ratio, worst_point=worst_point,
        status=VerdictStatus.PASS if worst_ratio <= 1.0 + slack else VerdictStatus.FAIL,
    )


def resolvent_identity_check(A: Generator, lam: complex, mu: complex, n_terms: int) -> float:
    """Frobenius residual of the n-term resolvent identity."""
    if n_terms < 1:
        raise PreconditionError("n_terms must be at least 1")
    R_lam = resolvent_matrix(A, lam)
    R_mu = resolvent_matrix(A, mu)
    d = mu - lam
    total = np.zeros_like(R_lam)
    power = R_mu.copy()
    for k in range(n_terms):
        total = total + d**k * power
        power = power @ R_mu
    # ``power`` is now R_mu^(n+1); the remainder needs R_mu^n.
    remainder = d**n_terms * R_lam @ np.linalg.matrix_power(R_mu, n_terms)
    return float(np.linalg.norm(R_lam - total - remainder, "fro"))


def bt_correspondence(
    fit: DecayFit, sweep: ResolventSweep, tolerance: float = 0.15
) -> CorrespondenceReport:
    """Resolvent growth |s|^g predicts decay t^(-1/g)."""
    observed = -fit.slope
    if fit.contaminated or not np.isfinite(sweep.exponent) or sweep.exponent <= 0 or observed <= 0:
        return CorrespondenceReport(
            predicted_decay=None, observed_decay=observed, mismatch=None,
            tolerance=tolerance, status=VerdictStatus.INAPPLICABLE,
        )
    predicted = 1.0 / sweep.exponent
    mismatch = abs(predicted - observed) / observed
    return CorrespondenceReport(
        predicted_decay=predicted, observed_decay=observed, mismatch=mismatch,
        tolerance=tolerance,
        status=VerdictStatus.PASS if mismatch <= tolerance else VerdictStatus.FAIL,
    )
