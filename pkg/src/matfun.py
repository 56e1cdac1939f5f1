"""
Dense complex matrix functions for finite-dimensional generators.

Spectral paths (eigen-coordinates) are used whenever the eigenvector basis
is well conditioned; the semigroup falls back to the dense scaling-and-squaring
exponential otherwise. Fractional powers refuse ill-conditioned bases.
"""

from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import structlog

from .config import get_settings
from .exceptions import (
    DecompositionError,
    IllConditionedError,
    NumericalError,
    PreconditionError,
    SingularityError,
)
from .models.semistab_models import FractionalOperator, Generator, SpectralDecomposition

logger = structlog.get_logger(__name__)


def as_complex_matrix(a, *, square: bool = False, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a 2-D complex128 array with finite entries."""
    arr = np.array(a, dtype=np.complex128)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise PreconditionError(f"{name} must be a nonempty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise PreconditionError(f"{name} has non-finite entries")
    if square and arr.shape[0] != arr.shape[1]:
        raise PreconditionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def as_complex_vector(x, n: int, name: str = "x") -> np.ndarray:
    vec = np.asarray(x, dtype=np.complex128).reshape(-1)
    if vec.shape[0] != n:
        raise PreconditionError(f"{name} has dimension {vec.shape[0]}, expected {n}")
    return vec


def _sort_order(eigenvalues: np.ndarray) -> np.ndarray:
    return np.lexsort((eigenvalues.imag, eigenvalues.real))


def decompose(a) -> SpectralDecomposition:
    """Eigen-decomposition sorted by (Re, Im) ascending.

    Normal matrices go through the complex Schur form, whose triangular
    factor is diagonal and whose basis is unitary.
    """
    A = as_complex_matrix(a, square=True, name="A")
    settings = get_settings()
    tol = settings.spectral_tolerance
    scale = max(np.linalg.norm(A, "fro"), 1.0)

    commutator = A @ A.conj().T - A.conj().T @ A
    normal = bool(np.linalg.norm(commutator, "fro") <= tol * scale**2)

    try:
        if normal:
            T, Z = sla.schur(A, output="complex")
            eigenvalues = np.diag(T).copy()
            vectors = Z
        else:
            eigenvalues, vectors = sla.eig(A)
            vectors = vectors / np.linalg.norm(vectors, axis=0, keepdims=True)
    except (sla.LinAlgError, ValueError) as e:
        routine = "schur" if normal else "eig"
        logger.error(
            "Eigenvalue iteration failed", routine=routine, error=str(e), dimension=A.shape[0]
        )
        raise DecompositionError(
            f"Eigenvalue iteration did not converge in {routine}: {e}", routine=routine
        )

    order = _sort_order(eigenvalues)
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]

    residual = np.linalg.norm(A @ vectors - vectors * eigenvalues, "fro")
    if residual > max(tol * scale, 1e3 * np.finfo(float).eps * scale):
        raise DecompositionError(
            f"Eigen-decomposition reconstruction residual {residual:.3e} too large"
        )

    if normal:
        condition = 1.0
        inverse: Optional[np.ndarray] = vectors.conj().T
    else:
        singular_values = sla.svdvals(vectors)
        smallest = singular_values[-1]
        condition = float(singular_values[0] / smallest) if smallest > 0 else float("inf")
        inverse = None
        if np.isfinite(condition) and condition < 1.0 / np.finfo(float).eps:
            inverse = sla.inv(vectors)

    logger.debug(
        "Decomposed matrix", dimension=A.shape[0], normal=normal, condition=condition
    )
    return SpectralDecomposition(
        eigenvalues=eigenvalues,
        eigenvectors=vectors,
        eigenvectors_inv=inverse,
        condition=condition,
        normal=normal,
    )


def make_generator(a, *, label: str = "matrix") -> Generator:
    """Wrap a square matrix with cached spectral data and dissipativity."""
    A = as_complex_matrix(a, square=True, name="A")
    spectral = decompose(A)
    symmetric_part = 0.5 * (A + A.conj().T)
    margin = float(sla.eigvalsh(symmetric_part)[-1])
    abscissa = float(np.max(spectral.eigenvalues.real))
    tol = get_settings().spectral_tolerance * max(np.linalg.norm(A, 2), 1.0)
    return Generator(
        matrix=A,
        spectral=spectral,
        dissipativity_margin=margin,
        spectral_abscissa=abscissa,
        contractive=margin <= tol,
        label=label,
    )


def require_stable(A: Generator, operation: str) -> None:
    if not A.stable:
        raise PreconditionError(
            f"{operation} requires spectral abscissa < 0, got {A.spectral_abscissa:.3e}",
            details={"spectral_abscissa": A.spectral_abscissa},
        )


def spectral_path_ok(A: Generator) -> bool:
    """Diagonalizable with eigenvector condition under the configured threshold."""
    spectral = A.spectral
    return spectral.diagonalizable and spectral.condition <= get_settings().condition_threshold


def propagators(A: Generator, times: Sequence[float]) -> np.ndarray:
    """Stack of e^{tA} for each t, shape (len(times), n, n)."""
    t = np.asarray(times, dtype=float).reshape(-1)
    if np.any(t < 0):
        raise PreconditionError("semigroup times must be nonnegative")
    if spectral_path_ok(A):
        V = A.spectral.eigenvectors
        W = A.spectral.eigenvectors_inv
        phases = np.exp(np.outer(t, A.spectral.eigenvalues))
        return np.matmul(V[None, :, :] * phases[:, None, :], W)
    return np.stack([dense_exponential(A, tk) for tk in t])


def dense_exponential(A: Generator, t: float) -> np.ndarray:
    """e^{tA} by scaling and squaring, for bases the spectral path refuses."""
    try:
        E = sla.expm(t * A.matrix)
    except Exception as e:  # scipy raises assorted errors on overflow
        raise NumericalError(f"Dense exponential failed at t={t}: {e}")
    if not np.all(np.isfinite(E)):
        raise NumericalError(f"Dense exponential overflowed at t={t}")
    return E


def orbit(A: Generator, times: Sequence[float], x) -> np.ndarray:
    """Rows e^{t_k A} x, shape (len(times), n)."""
    vec = as_complex_vector(x, A.dimension)
    t = np.asarray(times, dtype=float).reshape(-1)
    if np.any(t < 0):
        raise PreconditionError("semigroup times must be nonnegative")
    if spectral_path_ok(A):
        coefficients = A.spectral.eigenvectors_inv @ vec
        phases = np.exp(np.outer(t, A.spectral.eigenvalues))
        return (phases * coefficients) @ A.spectral.eigenvectors.T
    logger.debug("Dense exponential fallback", condition=A.spectral.condition)
    return np.stack([dense_exponential(A, tk) @ vec for tk in t])


def semigroup_apply(A: Generator, t: float, x) -> np.ndarray:
    """T(t)x = e^{tA}x."""
    if t < 0:
        raise PreconditionError(f"t must be nonnegative, got {t}")
    return orbit(A, [t], x)[0]


def _spectral_distance(A: Generator, lam: complex) -> float:
    return float(np.min(np.abs(lam - A.spectral.eigenvalues)))


def _require_regular(A: Generator, lam: complex) -> None:
    distance = _spectral_distance(A, lam)
    scale = max(np.linalg.norm(A.matrix, 2), abs(lam), 1.0)
    if distance <= get_settings().singularity_tolerance * scale:
        raise SingularityError(
            f"lambda={lam} lies within {distance:.3e} of the spectrum", distance=distance
        )


def fractional_operator(A: Generator, beta: float) -> FractionalOperator:
    """(I - A)^(-beta) via (1 - l)^(-beta) = exp(-beta Log(1 - l))."""
    if beta < 0:
        raise PreconditionError(f"beta must be nonnegative, got {beta}")
    _require_regular(A, 1.0)
    n = A.dimension
    if beta == 0:
        return FractionalOperator(beta=0.0, matrix=np.eye(n, dtype=np.complex128))
    spectral = A.spectral
    if not spectral_path_ok(A):
        raise IllConditionedError(
            f"eigenvector condition {spectral.condition:.3e} exceeds threshold; "
            "fractional powers need a diagonalizable, well-conditioned generator",
            condition=spectral.condition,
        )
    weights = np.exp(-beta * np.log(1.0 - spectral.eigenvalues))
    matrix = (spectral.eigenvectors * weights) @ spectral.eigenvectors_inv
    return FractionalOperator(beta=float(beta), matrix=matrix)


def inverse(A: Generator) -> np.ndarray:
    """A^{-1}; requires 0 outside the spectrum."""
    _require_regular(A, 0.0)
    return sla.inv(A.matrix)


def resolvent_apply(A: Generator, lam: complex, x) -> np.ndarray:
    """y with (lam I - A) y = x."""
    vec = as_complex_vector(x, A.dimension)
    _require_regular(A, lam)
    shifted = lam * np.eye(A.dimension) - A.matrix
    y = sla.solve(shifted, vec)
    residual = np.linalg.norm(shifted @ y - vec)
    tol = 1e3 * np.finfo(float).eps * np.linalg.cond(shifted)
    if residual > max(tol, 1e-10) * max(np.linalg.norm(vec), 1e-300):
        raise NumericalError(
            f"resolvent solve residual {residual:.3e} exceeds tolerance",
            details={"residual": float(residual)},
        )
    return y


def resolvent_matrix(A: Generator, lam: complex) -> np.ndarray:
    _require_regular(A, lam)
    return sla.inv(lam * np.eye(A.dimension) - A.matrix)


def resolvent_norm(A: Generator, lam: complex) -> float:
    """||(lam - A)^{-1}|| in the operator 2-norm."""
    _require_regular(A, lam)
    if A.spectral.normal:
        return 1.0 / _spectral_distance(A, lam)
    singular_values = sla.svdvals(lam * np.eye(A.dimension) - A.matrix)
    return float(1.0 / singular_values[-1])


def operator_norm(M: np.ndarray) -> float:
    """Largest singular value; batched over leading axes."""
    if M.ndim == 2:
        return float(np.linalg.norm(M, 2))
    return np.linalg.norm(M, ord=2, axis=(-2, -1))
