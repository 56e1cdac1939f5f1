"""
Pydantic models for generators, certificates, fits and experiment reports.

Array-valued fields (matrices, eigenvectors, Gramians) are excluded from JSON
dumps; they travel as Matrix Market files instead.
"""

from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ArrayModel(BaseModel):
    """Base for immutable models carrying numpy arrays."""

    model_config = ConfigDict(
        arbitrary_types_allowed=True, frozen=True, ser_json_inf_nan="strings"
    )


class ReportModel(BaseModel):
    """Base for mutable report objects."""

    model_config = ConfigDict(arbitrary_types_allowed=True, ser_json_inf_nan="strings")


class VerdictStatus(str, Enum):
    """Outcome of a check or a chain of checks."""

    PASS = "PASS"
    FAIL = "FAIL"
    INAPPLICABLE = "INAPPLICABLE"


class Construction(str, Enum):
    """How a Lyapunov operator was obtained."""

    DIRECT = "direct"
    QUADRATURE = "quadrature"


# ---------------------------------------------------------------------------
# Spectral data and generators
# ---------------------------------------------------------------------------


class SpectralDecomposition(ArrayModel):
    """Eigenvalues sorted by (Re, Im) with matching eigenvector columns."""

    eigenvalues: np.ndarray = Field(..., exclude=True)
    eigenvectors: np.ndarray = Field(..., exclude=True)
    eigenvectors_inv: Optional[np.ndarray] = Field(None, exclude=True)
    condition: float = Field(..., ge=0.0, description="2-norm condition of V")
    normal: bool

    @property
    def diagonalizable(self) -> bool:
        return self.eigenvectors_inv is not None


class Generator(ArrayModel):
    """Finite-dimensional stand-in for a semigroup generator A."""

    matrix: np.ndarray = Field(..., exclude=True)
    spectral: SpectralDecomposition
    dissipativity_margin: float
    spectral_abscissa: float
    contractive: bool
    label: str = "matrix"

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def stable(self) -> bool:
        return self.spectral_abscissa < 0.0


class FractionalOperator(ArrayModel):
    """The weight (I - A)^(-beta) on the principal branch."""

    beta: float = Field(..., ge=0.0)
    matrix: np.ndarray = Field(..., exclude=True)
    branch: str = "principal"


class DiagonalModelSpec(BaseModel):
    """Eigenvalues -k^(-a) + i*k*scale for k = 1..N."""

    N: int = Field(..., ge=1)
    a: float = Field(..., gt=0.0)
    frequency_scale: float = Field(1.0, gt=0.0)


class DampedWaveSpec(BaseModel):
    """1-D damped wave on (0, 1) with damping ``value`` on ``support``."""

    n: int = Field(..., ge=2)
    damping: float = Field(1.0, ge=0.0)
    support: Tuple[float, float] = (0.0, 1.0)

    @field_validator("support")
    @classmethod
    def validate_support(cls, v):
        lo, hi = v
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("support must satisfy 0 <= lo < hi <= 1")
        return v

    def profile(self, x: float) -> float:
        lo, hi = self.support
        return self.damping if lo <= x <= hi else 0.0


class DampedSystem(ArrayModel):
    """Undamped generator A, damping operator B and A_B = A - B B*."""

    A: Generator
    B: np.ndarray = Field(..., exclude=True)
    A_B: Generator


# ---------------------------------------------------------------------------
# Orbit functionals
# ---------------------------------------------------------------------------


class QuadratureResult(ReportModel):
    """Integral value with its error budget."""

    value: float = Field(..., ge=0.0)
    error: float = Field(..., ge=0.0)
    nodes: int = Field(..., ge=0)
    tail_bound: float = Field(0.0, ge=0.0)
    horizon: float = Field(0.0, ge=0.0)


class ProbeResult(ReportModel):
    """Per-probe orbit integral."""

    probe_id: int
    value: float
    error: float
    tail_bound: float
    ratio: float = Field(..., description="(integral)^(1/p) / probe norm")


class DatkoCertificate(ReportModel):
    """Closed-graph constant K over a probe set, with the semigroup bound M."""

    p: float = Field(..., ge=1.0)
    beta: float = Field(..., ge=0.0)
    K: float = Field(..., ge=0.0)
    M: float = Field(..., ge=0.0)
    probes: str
    probe_count: int
    weak: bool = False
    K_exact: Optional[float] = None
    probe_coverage: Optional[float] = None
    per_probe: List[ProbeResult] = Field(default_factory=list)


class OnePointReport(ReportModel):
    """t * ||T(t)F||^p against K^p M^p on a time grid."""

    bound: float
    max_violation_ratio: float
    worst_time: float
    status: VerdictStatus


class ExponentialCertificate(ReportModel):
    """Classical (unweighted) Datko constant and the implied exponential bound."""

    p: float
    K0: float
    M: float
    t0: float
    rate: float
    norm_at_t0: float
    max_violation_ratio: float
    status: VerdictStatus


class StrongStabilityReport(ReportModel):
    """Terminal orbit norms and first times below tolerance."""

    horizon: float
    tolerance: float
    terminal_norms: List[float]
    first_times: List[Optional[float]]
    status: VerdictStatus


# ---------------------------------------------------------------------------
# Decay and resolvent growth
# ---------------------------------------------------------------------------


class DecayFit(ReportModel):
    """Log-log least-squares fit of ||T(t)W|| over a window."""

    window: Tuple[float, float]
    sample_count: int
    slope: float
    intercept: float
    r_squared: float
    tail_slope: float
    contaminated: bool
    dimension_guard_ok: Optional[bool] = None
    samples: List[Tuple[float, float]] = Field(default_factory=list, exclude=True)


class ResolventSweep(ReportModel):
    """Resolvent norms along iR and the fitted growth exponent."""

    window: Tuple[float, float]
    exponent: float
    intercept: float
    samples: List[Tuple[float, float]] = Field(default_factory=list, exclude=True)
    excluded: List[float] = Field(default_factory=list)


class HolderReport(ReportModel):
    """Half-plane bound on ||(l - A)^(-1)(I - A)^(-beta)||."""

    p: float
    q: Optional[float]
    K_w: float
    max_ratio: float
    worst_point: Tuple[float, float]
    status: VerdictStatus


class CorrespondenceReport(ReportModel):
    """Resolvent growth exponent against the observed decay exponent."""

    predicted_decay: Optional[float]
    observed_decay: float
    mismatch: Optional[float]
    tolerance: float = 0.15
    status: VerdictStatus


# ---------------------------------------------------------------------------
# Lyapunov
# ---------------------------------------------------------------------------


class LyapunovCertificate(ReportModel):
    """Solution of A*P + PA = -I with its quality metrics."""

    P: np.ndarray = Field(..., exclude=True)
    residual: float
    asymmetry: float
    positivity_margin: float
    construction: Construction
    solver: str
    weighted_norms: Dict[float, float] = Field(default_factory=dict)
    quadrature_error: Optional[float] = None


class Prop31Report(ReportModel):
    """Both sides of the Datko/Lyapunov equivalence at one dimension."""

    beta: float
    datko_K: float
    datko_finite: bool
    weighted_norm: float
    weighted_residual: float
    unweighted_residual: float
    positivity_margin: float
    constructions_agree: bool
    construction_gap: float
    status: VerdictStatus


class DimensionSweepRow(ReportModel):
    dimension: int
    value: float


class Cor33Report(ReportModel):
    """Dimension-uniformity of Datko and Lyapunov constants above 2/alpha."""

    alpha: float
    beta: float
    threshold: float
    datko: List[DimensionSweepRow]
    weighted: List[DimensionSweepRow]
    datko_ratios: List[float]
    weighted_ratios: List[float]
    ratio_band: Tuple[float, float] = (0.8, 1.25)
    status: VerdictStatus


# ---------------------------------------------------------------------------
# Observability
# ---------------------------------------------------------------------------


class ObservabilityCertificate(ReportModel):
    """Constant K with ||F_beta x||^2 <= K <G_tau x, x>."""

    tau: float = Field(..., gt=0.0)
    beta: float = Field(..., gt=0.0)
    p: float = 2.0
    K: float
    gramian: Optional[np.ndarray] = Field(None, exclude=True)
    gramian_min_eig: float
    gramian_max_eig: float
    min_generalized_eigenvalue: Optional[float] = None
    feasible: bool
    null_direction: Optional[List[Tuple[float, float]]] = None


class DampingComparison(ReportModel):
    """Ratio of undamped to damped observation energies over probes."""

    tau: float
    c_emp: float
    c_exact: Optional[float] = None
    probe_count: int
    excluded: int
    violated: bool = False
    violating_probes: List[int] = Field(default_factory=list)


class ChainLink(ReportModel):
    """One inequality of the observability chain."""

    name: str
    lhs: float
    rhs: float
    status: VerdictStatus
    detail: str = ""


class Lemma41Report(ReportModel):
    """Observability -> Datko -> decay chain."""

    beta: float
    p: float
    tau: float
    obs_constant: ObservabilityCertificate
    links: List[ChainLink]
    first_failure: Optional[str] = None
    decay: Optional[DecayFit] = None
    predicted_slope: float
    status: VerdictStatus


class NormEquivalence(ReportModel):
    """Two-sided comparison of the F_beta weights of A and A_B."""

    beta: float
    damped_over_undamped: float
    undamped_over_damped: float


class Thm42Verdict(ReportModel):
    """Observability of the undamped system transferred to the damped one."""

    beta: float
    tau: float
    hypothesis: ObservabilityCertificate
    comparison: DampingComparison
    norm_equivalence: NormEquivalence
    transferred_constant: float
    pipeline: Optional[Lemma41Report] = None
    observed_slope: Optional[float] = None
    predicted_slope: float
    stated_exponent_note: str = (
        "stated conclusion o(t^(1/(2 beta))) carries a positive exponent; "
        "compared against -1/(2 beta) as in the observability lemma"
    )
    status: VerdictStatus


# ---------------------------------------------------------------------------
# Experiment configuration and reports
# ---------------------------------------------------------------------------


class ModelKind(str, Enum):
    DIAGONAL = "diagonal"
    DAMPED_WAVE = "damped-wave"
    MATRIX_FILE = "matrix-file"


class AnalysisKind(str, Enum):
    DECAY = "decay"
    RESOLVENT = "resolvent"
    DATKO = "datko"
    WEAK_DATKO = "weak-datko"
    LYAPUNOV = "lyapunov"
    OBSERVABILITY = "observability"
    THM42 = "thm42"
    SWEEP = "sweep"


class ModelConfig(BaseModel):
    """Which generator family an experiment runs on."""

    kind: ModelKind
    N: Optional[int] = Field(None, ge=1)
    a: Optional[float] = Field(None, gt=0.0)
    frequency_scale: float = Field(1.0, gt=0.0)
    n: Optional[int] = Field(None, ge=2)
    damping: float = Field(1.0, ge=0.0)
    support: Tuple[float, float] = (0.0, 1.0)
    matrix_path: Optional[str] = None
    damping_path: Optional[str] = None

    @model_validator(mode="after")
    def check_kind_fields(self):
        if self.kind == ModelKind.DIAGONAL and (self.N is None or self.a is None):
            raise ValueError("model.N and model.a are required for diagonal models")
        if self.kind == ModelKind.DAMPED_WAVE and self.n is None:
            raise ValueError("model.n is required for damped-wave models")
        if self.kind == ModelKind.MATRIX_FILE and not self.matrix_path:
            raise ValueError("model.matrix_path is required for matrix-file models")
        return self

    def with_dimension(self, dimension: int) -> "ModelConfig":
        """Copy with the truncation dimension replaced (N or n)."""
        if self.kind == ModelKind.DIAGONAL:
            return self.model_copy(update={"N": dimension})
        if self.kind == ModelKind.DAMPED_WAVE:
            return self.model_copy(update={"n": dimension})
        return self


class ExperimentParameters(BaseModel):
    """Analysis parameters; unset tolerances fall back to the settings."""

    p: Optional[float] = Field(None, ge=1.0)
    betas: List[float] = Field(default_factory=list)
    tau: Optional[float] = Field(None, gt=0.0)
    decay_window: Optional[Tuple[float, float]] = None
    resolvent_grid: Optional[List[float]] = None
    weight: str = Field("inverse", description="inverse | fractional")
    rel_tol: Optional[float] = Field(None, gt=0.0)
    probe_seed: Optional[int] = None
    random_probes: Optional[int] = Field(None, ge=0)
    alpha: Optional[float] = Field(None, gt=0.0)

    @field_validator("betas")
    @classmethod
    def validate_betas(cls, v):
        if any(b < 0 for b in v):
            raise ValueError("betas must be nonnegative")
        return v

    @field_validator("weight")
    @classmethod
    def validate_weight(cls, v):
        if v not in ("inverse", "fractional"):
            raise ValueError("weight must be 'inverse' or 'fractional'")
        return v


# Parameters each analysis needs before any computation starts.
REQUIRED_PARAMETERS: Dict[AnalysisKind, Tuple[str, ...]] = {
    AnalysisKind.DECAY: ("decay_window",),
    AnalysisKind.RESOLVENT: ("resolvent_grid",),
    AnalysisKind.DATKO: ("p", "betas"),
    AnalysisKind.WEAK_DATKO: ("p", "betas"),
    AnalysisKind.LYAPUNOV: ("betas",),
    AnalysisKind.OBSERVABILITY: ("tau", "betas"),
    AnalysisKind.THM42: ("tau", "betas"),
    AnalysisKind.SWEEP: (),
}


class ExperimentConfig(BaseModel):
    """A single JSON experiment document."""

    model: ModelConfig
    analyses: List[AnalysisKind] = Field(..., min_length=1)
    parameters: ExperimentParameters = Field(default_factory=ExperimentParameters)
    sweep_dimensions: List[int] = Field(default_factory=list)
    output_dir: Optional[str] = None

    def missing_parameters(self) -> List[str]:
        """Names (``parameters.<field>``) required by the analyses but unset."""
        missing: List[str] = []
        for analysis in self.analyses:
            for name in REQUIRED_PARAMETERS[analysis]:
                value = getattr(self.parameters, name)
                if value is None or (isinstance(value, list) and not value):
                    field = f"parameters.{name}"
                    if field not in missing:
                        missing.append(field)
        if AnalysisKind.SWEEP in self.analyses and not self.sweep_dimensions:
            missing.append("sweep_dimensions")
        return missing


class Provenance(BaseModel):
    tool_version: str
    seed: int
    threads: int
    started_at: str = Field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat()
    )
    finished_at: Optional[str] = None


class AnalysisOutcome(BaseModel):
    """Result (or failure) of one analysis at one dimension."""

    analysis: AnalysisKind
    dimension: Optional[int] = None
    success: bool
    data: Optional[Dict[str, Any]] = None
    error: Optional[str] = None
    error_code: Optional[int] = None


class RatioTable(BaseModel):
    """Cross-dimension ratios of one reported quantity."""

    analysis: AnalysisKind
    quantity: str
    dimensions: List[int]
    values: List[float]
    ratios: List[float]
    predicted_ratios: Optional[List[float]] = None


class Report(BaseModel):
    """Everything a run produced, deterministic up to timestamps."""

    model_config = ConfigDict(ser_json_inf_nan="strings")

    config: Dict[str, Any]
    results: List[AnalysisOutcome] = Field(default_factory=list)
    ratio_tables: List[RatioTable] = Field(default_factory=list)
    converse: List[Dict[str, Any]] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    provenance: Provenance

    @property
    def exit_code(self) -> int:
        codes = [r.error_code or 0 for r in self.results if not r.success]
        return max(codes, default=0)
