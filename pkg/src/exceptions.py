"""
Exception hierarchy for the stability laboratory.

Every error carries the process exit code it maps to, so the experiment
runner can fold per-analysis failures into a single exit status.
"""

from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_INTERNAL = 3


class SemistabError(Exception):
    """Base exception for all laboratory errors."""

    default_code = EXIT_INTERNAL

    def __init__(
        self,
        message: str,
        error_code: Optional[int] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.error_code = self.default_code if error_code is None else error_code
        self.details = details or {}
        super().__init__(self.message)


class ConfigValidationError(SemistabError):
    """Raised when an experiment configuration is incomplete or inconsistent."""

    default_code = EXIT_VALIDATION

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        merged = dict(details or {})
        if field:
            merged["field"] = field
        super().__init__(message, details=merged or None)
        self.field = field


class PreconditionError(SemistabError):
    """Raised when an operation's hypothesis does not hold for its inputs."""

    default_code = EXIT_VALIDATION


class NumericalError(SemistabError):
    """Raised when a computation cannot be completed to certified accuracy."""

    default_code = EXIT_NUMERICAL


class DecompositionError(NumericalError):
    """Eigenvalue iteration failed or produced an inconsistent decomposition."""

    def __init__(self, message: str, routine: Optional[str] = None):
        super().__init__(message, details={"routine": routine})
        self.routine = routine


class IllConditionedError(NumericalError):
    """Eigenvector basis too ill-conditioned for a certifiable spectral path."""

    def __init__(self, message: str, condition: float):
        super().__init__(message, details={"condition": condition})
        self.condition = condition


class SingularityError(NumericalError):
    """Evaluation point lies (numerically) on the spectrum."""

    def __init__(self, message: str, distance: float):
        super().__init__(message, details={"distance": distance})
        self.distance = distance


class LyapunovSingularError(NumericalError):
    """Lyapunov operator numerically singular (some conj(l_j) + l_k ~ 0)."""


class QuadratureBudgetError(NumericalError):
    """Tolerance unreachable within the node budget; best estimate attached."""

    def __init__(self, message: str, estimate: Any, error: float, nodes: int):
        super().__init__(message, details={"error": error, "nodes": nodes})
        self.estimate = estimate
        self.error = error
        self.nodes = nodes
