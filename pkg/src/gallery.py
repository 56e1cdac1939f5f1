"""
Generator families the experiments run on.

- diagonal spectral models with eigenvalues -k^(-a) + i k (polynomial decay rate 1/a)
- a 1-D wave equation on (0, 1) in energy coordinates, with bounded damping
- the damping construction A_B = A - B B*
"""

from typing import Callable, Union

import numpy as np
import scipy.linalg as sla
import structlog

from .exceptions import PreconditionError
from .matfun import as_complex_matrix, make_generator
from .models.semistab_models import (
    DampedSystem,
    DampedWaveSpec,
    DiagonalModelSpec,
    Generator,
)

logger = structlog.get_logger(__name__)

DampingProfile = Callable[[float], float]


def diagonal_eigenvalues(spec: DiagonalModelSpec) -> np.ndarray:
    k = np.arange(1, spec.N + 1, dtype=float)
    return -(k ** (-spec.a)) + 1j * k * spec.frequency_scale


def build_diagonal(spec: DiagonalModelSpec) -> Generator:
    """Diagonal normal generator with l_k = -k^(-a) + i k scale, k = 1..N."""
    A = np.diag(diagonal_eigenvalues(spec))
    logger.debug("Built diagonal model", N=spec.N, a=spec.a)
    return make_generator(A, label=f"diagonal(N={spec.N}, a={spec.a})")


def second_difference(n: int) -> np.ndarray:
    """Dirichlet -d^2/dx^2 on n interior points of (0, 1), scaled by (n+1)^2."""
    main = 2.0 * np.ones(n)
    off = -np.ones(n - 1)
    return (n + 1) ** 2 * (np.diag(main) + np.diag(off, 1) + np.diag(off, -1))


def build_damped_wave(n: int, damping_profile: Union[DampingProfile, float]) -> DampedSystem:
    """First-order energy form of u_tt = u_xx - b(x) u_t.

    State z = (L^{1/2} u, u_t); A = [[0, L^{1/2}], [-L^{1/2}, 0]] is skew-adjoint
    and B = [0; diag(sqrt(b(x_j)))].
    """
    if n < 2:
        raise PreconditionError(f"damped wave needs n >= 2 interior points, got {n}")
    profile = damping_profile if callable(damping_profile) else (lambda _x: float(damping_profile))

    grid = np.arange(1, n + 1) / (n + 1)
    values = np.array([profile(float(x)) for x in grid], dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise PreconditionError("damping values must be finite and nonnegative")

    # L is symmetric positive definite; its principal root via the symmetric eigensolver.
    w, Q = sla.eigh(second_difference(n))
    root = (Q * np.sqrt(w)) @ Q.T
    root = 0.5 * (root + root.T)

    zero = np.zeros((n, n))
    A = np.block([[zero, root], [-root, zero]])
    B = np.vstack([zero, np.diag(np.sqrt(values))])
    logger.debug("Built damped wave", n=n, damping_max=float(values.max()))
    return damp(make_generator(A, label=f"wave(n={n})"), B)


def build_damped_wave_from_spec(spec: DampedWaveSpec) -> DampedSystem:
    return build_damped_wave(spec.n, spec.profile)


def damp(A: Generator, B) -> DampedSystem:
    """A_B = A - B B*; requires A to generate a contraction semigroup."""
    if not A.contractive:
        raise PreconditionError(
            "damping requires a contraction semigroup "
            f"(dissipativity margin {A.dissipativity_margin:.3e} > 0)",
            details={"dissipativity_margin": A.dissipativity_margin},
        )
    B = as_complex_matrix(B, name="B")
    if B.shape[0] != A.dimension:
        raise PreconditionError(
            f"B has {B.shape[0]} rows, expected {A.dimension}"
        )
    damped = A.matrix - B @ B.conj().T
    return DampedSystem(A=A, B=B, A_B=make_generator(damped, label=f"{A.label}-damped"))
