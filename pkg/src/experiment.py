"""
Config-driven experiment runner: model construction, analysis dispatch,
dimension sweeps and report emission (JSON report plus CSV series).
"""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, ValidationError

from . import decay, lyapunov, observability, orbits
from .config import get_settings
from .exceptions import (
    EXIT_INTERNAL,
    ConfigValidationError,
    PreconditionError,
    SemistabError,
    SingularityError,
)
from .gallery import build_damped_wave_from_spec, build_diagonal, damp
from .matfun import inverse, make_generator, spectral_path_ok
from .matrix_io import read_matrix, write_matrix
from .models.semistab_models import (
    AnalysisKind,
    AnalysisOutcome,
    DampedSystem,
    DampedWaveSpec,
    DiagonalModelSpec,
    ExperimentConfig,
    Generator,
    ModelConfig,
    ModelKind,
    Provenance,
    RatioTable,
    Report,
    VerdictStatus,
)

logger = structlog.get_logger(__name__)

CSV_COLUMNS: Dict[str, Tuple[str, ...]] = {
    "decay": ("t", "norm", "log_t", "log_norm"),
    "resolvent": ("s", "norm"),
    "probes": ("probe_id", "value", "error", "tail"),
    "links": ("name", "lhs", "rhs", "status"),
}

STABILITY_PROBES = 4
IDENTITY_POINTS = (1.0, 2.0 + 1.0j)
IDENTITY_TERMS = (1, 2, 4)
HALFPLANE_GRID = [
    complex(re, im) for re in (0.01, 0.1, 0.5, 1.0, 2.0, 10.0) for im in (0.0, 1.0, 10.0, 100.0)
]


class BuiltModel(BaseModel):
    """The generator analyses run on, with the damped system when there is one."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    generator: Generator
    system: Optional[DampedSystem] = None
    dimension: int
    diagonal: Optional[DiagonalModelSpec] = None


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment JSON document."""
    path = Path(path)
    if not path.exists():
        raise ConfigValidationError(f"config file not found: {path}", field="config")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigValidationError(f"config is not valid JSON: {e}", field="config")
    return validate(raw)


def validate(raw) -> ExperimentConfig:
    """Model validation plus the per-analysis required-parameter check."""
    try:
        config = raw if isinstance(raw, ExperimentConfig) else ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigValidationError(f"{field}: {first['msg']}", field=field)
    missing = config.missing_parameters()
    if missing:
        raise ConfigValidationError(
            f"missing required parameter {missing[0]}",
            field=missing[0],
            details={"missing": missing},
        )
    return config


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


def build_model(spec: ModelConfig) -> BuiltModel:
    if spec.kind == ModelKind.DIAGONAL:
        diagonal = DiagonalModelSpec(N=spec.N, a=spec.a, frequency_scale=spec.frequency_scale)
        A = build_diagonal(diagonal)
        return BuiltModel(generator=A, dimension=A.dimension, diagonal=diagonal)
    if spec.kind == ModelKind.DAMPED_WAVE:
        system = build_damped_wave_from_spec(
            DampedWaveSpec(n=spec.n, damping=spec.damping, support=spec.support)
        )
        return BuiltModel(generator=system.A_B, system=system, dimension=system.A_B.dimension)
    A = make_generator(read_matrix(spec.matrix_path), label=Path(spec.matrix_path).stem)
    if spec.damping_path:
        system = damp(A, read_matrix(spec.damping_path))
        return BuiltModel(generator=system.A_B, system=system, dimension=A.dimension)
    return BuiltModel(generator=A, dimension=A.dimension)


def export_model(spec: ModelConfig, out_dir) -> List[Path]:
    """Write A (and B, A_B when damped) as Matrix Market files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    built = build_model(spec)
    written = []
    if built.system is None:
        written.append(write_matrix(out / "A.mtx", built.generator.matrix, built.generator.label))
    else:
        written.append(write_matrix(out / "A.mtx", built.system.A.matrix, built.system.A.label))
        written.append(write_matrix(out / "B.mtx", built.system.B, "damping"))
        written.append(write_matrix(out / "A_B.mtx", built.system.A_B.matrix, built.system.A_B.label))
    logger.info("Exported model", files=[str(p) for p in written])
    return written


# ---------------------------------------------------------------------------
# Analyses
# ---------------------------------------------------------------------------


class RunContext(BaseModel):
    """Per-run settings threaded through the analysis handlers."""

    config: ExperimentConfig
    out_dir: Path
    seed: int
    threads: int
    suffix: str = ""


def _dump(model: BaseModel) -> Dict[str, Any]:
    return json.loads(model.model_dump_json())


def _write_csv(path: Path, kind: str, rows: Sequence[Sequence[Any]]) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS[kind])
        writer.writerows(rows)
    return path.name


def _require_system(built: BuiltModel, analysis: str) -> DampedSystem:
    if built.system is None:
        raise PreconditionError(f"{analysis} needs a damped model (damped-wave or damping_path)")
    return built.system


def _beta_key(beta: float) -> str:
    return f"{beta:g}"


def _run_decay(built: BuiltModel, ctx: RunContext, warnings: List[str]) -> Dict[str, Any]:
    params = ctx.config.parameters
    A = built.generator
    weights = [("inverse", 1.0)]
    if params.weight == "fractional":
        weights = [("fractional", beta) for beta in params.betas or [1.0]]
    fits = {}
    for kind, beta in weights:
        W = decay.decay_weight(A, kind, beta)
        fit = decay.decay_fit(A, W, params.decay_window, mode_guard=built.diagonal)
        label = "inverse" if kind == "inverse" else f"beta={_beta_key(beta)}"
        rows = [(t, n, float(np.log(t)), float(np.log(max(n, 1e-300)))) for t, n in fit.samples]
        csv_name = _write_csv(ctx.out_dir / f"decay_{kind}_{_beta_key(beta)}{ctx.suffix}.csv", "decay", rows)
        fits[label] = {**_dump(fit), "csv": csv_name}
        if fit.contaminated:
            warnings.append(f"decay[{label}]{ctx.suffix}: exponential contamination")
        if fit.dimension_guard_ok is False:
            warnings.append(f"decay[{label}]{ctx.suffix}: dominant mode beyond truncation")

    probes, _ = orbits.probe_set(A.dimension, ctx.seed, STABILITY_PROBES)
    stability = orbits.strong_stability_check(A, probes)
    if stability.status != VerdictStatus.PASS:
        warnings.append(f"decay{ctx.suffix}: some orbits did not reach the tolerance")
    # one random orbit started in the range of A^{-1}
    x = inverse(A) @ probes[-1][1]
    orbit_fit = decay.orbit_decay_fit(A, x, params.decay_window)
    return {
        "fits": fits,
        "orbit_fit": _dump(orbit_fit),
        "strong_stability": _dump(stability),
    }


def _run_resolvent(built: BuiltModel, ctx: RunContext, warnings: List[str]) -> Dict[str, Any]:
    sweep = decay.resolvent_sweep(built.generator, ctx.config.parameters.resolvent_grid)
    csv_name = _write_csv(ctx.out_dir / f"resolvent{ctx.suffix}.csv", "resolvent", sweep.samples)
    if sweep.excluded:
        warnings.append(f"resolvent{ctx.suffix}: {len(sweep.excluded)} frequencies on the spectrum")
    data = {**_dump(sweep), "csv": csv_name}
    residuals = {}
    for n_terms in IDENTITY_TERMS:
        try:
            residuals[str(n_terms)] = decay.resolvent_identity_check(
                built.generator, IDENTITY_POINTS[0], IDENTITY_POINTS[1], n_terms
            )
        except SingularityError as e:
            warnings.append(f"resolvent{ctx.suffix}: identity check skipped ({e})")
            break
    data["identity_residuals"] = residuals
    if ctx.config.parameters.decay_window:
        A = built.generator
        fit = decay.decay_fit(A, decay.decay_weight(A), ctx.config.parameters.decay_window)
        data["correspondence"] = _dump(decay.bt_correspondence(fit, sweep))
    return data


def _probe_rows(cert) -> List[Tuple[Any, ...]]:
    return [(r.probe_id, r.value, r.error, r.tail_bound) for r in cert.per_probe]


def _run_datko(built: BuiltModel, ctx: RunContext, warnings: List[str], weak: bool = False) -> Dict[str, Any]:
    params = ctx.config.parameters
    A = built.generator
    settings = get_settings()
    random_count = settings.random_probe_count if params.random_probes is None else params.random_probes
    rel_tol = params.rel_tol or settings.quadrature_rel_tol
    M = orbits.semigroup_bound(A)
    probes, descriptor = orbits.probe_set(A.dimension, ctx.seed, random_count)
    t_grid = np.geomspace(1e-3, 10.0 / abs(A.spectral_abscissa), 128)
    certificates = {}
    for beta in params.betas:
        if weak:
            pairs, _ = orbits.probe_pairs(A.dimension, ctx.seed, random_count)
            cert = orbits.weak_datko_constant(A, beta, params.p, pairs, rel_tol, ctx.threads)
        else:
            cert = orbits.datko_constant(A, beta, params.p, probes, rel_tol, ctx.threads, M=M)
            cert.probes = descriptor
        name = "weak_datko" if weak else "datko"
        csv_name = _write_csv(
            ctx.out_dir / f"{name}_probes_{_beta_key(beta)}{ctx.suffix}.csv", "probes", _probe_rows(cert)
        )
        entry = _dump(cert)
        entry.pop("per_probe", None)
        entry["csv"] = csv_name
        if params.alpha is not None:
            entry["converse_condition"] = orbits.converse_exponent_condition(params.alpha, beta, params.p)
        if weak:
            entry["holder"] = _holder(A, cert, warnings, ctx.suffix)
        else:
            K = cert.K_exact if cert.K_exact is not None else cert.K
            one_point = orbits.one_point_bound_check(A, beta, params.p, K, M, t_grid)
            if one_point.status != VerdictStatus.PASS:
                warnings.append(f"datko[beta={_beta_key(beta)}]{ctx.suffix}: one-point bound violated")
            entry["one_point"] = _dump(one_point)
        certificates[_beta_key(beta)] = entry
    data: Dict[str, Any] = {"certificates": certificates}
    if not weak:
        exponential = orbits.uniform_exponential_certificate(A, params.p, rel_tol, probes)
        data["exponential"] = _dump(exponential)
    return data


def _holder(A: Generator, cert, warnings: List[str], suffix: str) -> Dict[str, Any]:
    """Half-plane resolvent bound with the weak constant.

    At p = 2 the exact strong constant bounds the weak supremum and is used
    instead of the probe estimate.
    """
    K_w, source = cert.K, "weak-probes"
    if cert.p == 2 and spectral_path_ok(A):
        K_w, source = max(cert.K, orbits.exact_datko_constant(A, cert.beta)), "exact-strong"
    report = decay.holder_halfplane_check(A, cert.beta, cert.p, HALFPLANE_GRID, K_w)
    if report.status != VerdictStatus.PASS:
        warnings.append(f"weak-datko[beta={_beta_key(cert.beta)}]{suffix}: half-plane bound exceeded")
    return {**_dump(report), "K_w_source": source}


def _run_lyapunov(built: BuiltModel, ctx: RunContext, warnings: List[str]) -> Dict[str, Any]:
    params = ctx.config.parameters
    A = built.generator
    cert = lyapunov.weighted_certificate(lyapunov.lyap_direct(A), A, params.betas)
    rel_tol = params.rel_tol or 1e-8
    checks = {}
    for beta in params.betas:
        report = lyapunov.prop31_roundtrip(
            A, beta, rel_tol=rel_tol, check_uniqueness=A.dimension <= 50
        )
        checks[_beta_key(beta)] = _dump(report)
    if cert.positivity_margin < -1e-10:
        warnings.append(f"lyapunov{ctx.suffix}: P is not positive semidefinite")
    return {"certificate": _dump(cert), "roundtrip": checks}


def _run_observability(built: BuiltModel, ctx: RunContext, warnings: List[str]) -> Dict[str, Any]:
    system = _require_system(built, "observability")
    params = ctx.config.parameters
    probes, _ = orbits.probe_set(system.A.dimension, ctx.seed, min(get_settings().random_probe_count, 8))
    comparison = observability.damping_comparison(system, params.tau, probes, params.rel_tol)
    t_grid = np.linspace(0.0, params.tau, 65)
    dissipation = max(observability.dissipation_check(system, x, t_grid) for _, x in probes)
    horizons = [0.25 * params.tau, 0.5 * params.tau, params.tau]
    budget = max(observability.energy_budget_check(system, x, horizons) for _, x in probes)
    if budget > get_settings().check_slack:
        warnings.append(f"observability{ctx.suffix}: observed energy exceeds energy lost")
    constants = {}
    for beta in params.betas:
        cert = observability.obs_constant(system.A, system.B, params.tau, beta, params.rel_tol)
        if not cert.feasible:
            warnings.append(f"observability[beta={_beta_key(beta)}]{ctx.suffix}: Gramian singular")
        constants[_beta_key(beta)] = _dump(cert)
    return {
        "constants": constants,
        "comparison": _dump(comparison),
        "max_dissipation_violation": dissipation,
        "max_energy_budget_violation": budget,
    }


def _run_thm42(built: BuiltModel, ctx: RunContext, warnings: List[str]) -> Dict[str, Any]:
    system = _require_system(built, "thm42")
    params = ctx.config.parameters
    probes, _ = orbits.probe_set(system.A.dimension, ctx.seed, min(get_settings().random_probe_count, 8))
    window = params.decay_window or observability.DEFAULT_DECAY_WINDOW
    verdicts = {}
    for beta in params.betas:
        verdict = observability.thm42_verdict(system, beta, params.tau, probes, window, params.rel_tol)
        entry = _dump(verdict)
        if verdict.pipeline is not None:
            rows = [(l.name, l.lhs, l.rhs, l.status.value) for l in verdict.pipeline.links]
            entry["csv"] = _write_csv(
                ctx.out_dir / f"thm42_links_{_beta_key(beta)}{ctx.suffix}.csv", "links", rows
            )
        verdicts[_beta_key(beta)] = entry
    return {"verdicts": verdicts}


HANDLERS: Dict[AnalysisKind, Callable[[BuiltModel, RunContext, List[str]], Dict[str, Any]]] = {
    AnalysisKind.DECAY: _run_decay,
    AnalysisKind.RESOLVENT: _run_resolvent,
    AnalysisKind.DATKO: _run_datko,
    AnalysisKind.WEAK_DATKO: lambda built, ctx, w: _run_datko(built, ctx, w, weak=True),
    AnalysisKind.LYAPUNOV: _run_lyapunov,
    AnalysisKind.OBSERVABILITY: _run_observability,
    AnalysisKind.THM42: _run_thm42,
}


def _run_analyses(
    model: ModelConfig, ctx: RunContext, dimension: Optional[int] = None
) -> Tuple[List[AnalysisOutcome], List[str]]:
    """Execute the configured analyses in order; failures are recorded, not raised."""
    warnings: List[str] = []
    outcomes: List[AnalysisOutcome] = []
    analyses = [a for a in ctx.config.analyses if a != AnalysisKind.SWEEP]
    try:
        built = build_model(model)
    except SemistabError as e:
        logger.error("Model construction failed", error=str(e), code=e.error_code)
        return [
            AnalysisOutcome(analysis=a, dimension=dimension, success=False,
                            error=str(e), error_code=e.error_code)
            for a in analyses
        ], warnings

    for analysis in analyses:
        logger.info("Analysis started", analysis=analysis.value, dimension=built.dimension)
        try:
            data = HANDLERS[analysis](built, ctx, warnings)
            outcomes.append(AnalysisOutcome(
                analysis=analysis, dimension=built.dimension, success=True, data=data,
            ))
            logger.info("Analysis finished", analysis=analysis.value)
        except SemistabError as e:
            logger.error("Analysis failed", analysis=analysis.value, error=str(e), code=e.error_code)
            outcomes.append(AnalysisOutcome(
                analysis=analysis, dimension=built.dimension, success=False,
                error=str(e), error_code=e.error_code,
            ))
        except Exception as e:
            logger.exception("Internal error in analysis", analysis=analysis.value)
            outcomes.append(AnalysisOutcome(
                analysis=analysis, dimension=built.dimension, success=False,
                error=f"internal error: {e}", error_code=EXIT_INTERNAL,
            ))
    return outcomes, warnings


def _provenance(seed: int, threads: int) -> Provenance:
    return Provenance(tool_version=get_settings().tool_version, seed=seed, threads=threads)


def _finish(report: Report, out_dir: Path) -> Report:
    report.provenance.finished_at = datetime.now(timezone.utc).isoformat()
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
    logger.info("Report written", path=str(out_dir / "report.json"), exit_code=report.exit_code)
    return report


def _resolve(config: ExperimentConfig, out_dir, seed, threads) -> RunContext:
    settings = get_settings()
    out = Path(out_dir or config.output_dir or settings.output_dir)
    if seed is None:
        seed = config.parameters.probe_seed if config.parameters.probe_seed is not None else settings.probe_seed
    return RunContext(config=config, out_dir=out, seed=seed, threads=threads or settings.threads)


def run(
    config: ExperimentConfig,
    out_dir=None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> Report:
    """Execute the analyses in declared order and write report.json plus CSVs.

    A config listing ``sweep`` is dispatched to :func:`sweep` over its
    ``sweep_dimensions``.
    """
    config = validate(config)
    if AnalysisKind.SWEEP in config.analyses:
        return sweep(config, config.sweep_dimensions, out_dir, seed, threads)
    ctx = _resolve(config, out_dir, seed, threads)
    report = Report(config=_dump(config), provenance=_provenance(ctx.seed, ctx.threads))
    outcomes, warnings = _run_analyses(config.model, ctx)
    report.results.extend(outcomes)
    report.warnings.extend(warnings)
    return _finish(report, ctx.out_dir)


# ---------------------------------------------------------------------------
# Dimension sweeps
# ---------------------------------------------------------------------------


def _scaling_exponent(model: ModelConfig, analysis: AnalysisKind, p: float, beta: float) -> Optional[float]:
    """Predicted growth exponent in N for the diagonal family, floored at 0."""
    if model.kind != ModelKind.DIAGONAL:
        return None
    scale = p if analysis == AnalysisKind.DATKO else 2.0
    return max(model.a - scale * beta, 0.0)


def _ratio_tables(config: ExperimentConfig, per_dimension: List[Tuple[int, List[AnalysisOutcome]]]) -> List[RatioTable]:
    tables: List[RatioTable] = []
    dimensions = [d for d, _ in per_dimension]
    if len(dimensions) < 2:
        return tables
    p = config.parameters.p or 2.0

    def collect(analysis: AnalysisKind, extract: Callable[[Dict[str, Any]], float]) -> Optional[List[float]]:
        values = []
        for _, outcomes in per_dimension:
            match = next((o for o in outcomes if o.analysis == analysis and o.success), None)
            if match is None:
                return None
            values.append(float(extract(match.data)))
        return values

    for beta in config.parameters.betas:
        key = _beta_key(beta)
        if AnalysisKind.DATKO in config.analyses:
            values = collect(AnalysisKind.DATKO, lambda d: d["certificates"][key]["K"] ** p)
            if values:
                tables.append(_table(config, AnalysisKind.DATKO, f"K^p[beta={key}]", dimensions, values, p, beta))
        if AnalysisKind.LYAPUNOV in config.analyses:
            values = collect(
                AnalysisKind.LYAPUNOV,
                lambda d: _by_beta(d["certificate"]["weighted_norms"], beta),
            )
            if values:
                tables.append(_table(config, AnalysisKind.LYAPUNOV, f"weighted_norm[beta={key}]", dimensions, values, 2.0, beta))
    return tables


def _by_beta(table: Dict[str, Any], beta: float) -> float:
    """Entry of a JSON table keyed by stringified beta."""
    return next(v for k, v in table.items() if float(k) == float(beta))


def _table(config, analysis, quantity, dimensions, values, p, beta) -> RatioTable:
    exponent = _scaling_exponent(config.model, analysis, p, beta)
    predicted = None
    if exponent is not None:
        predicted = [(b / a) ** exponent for a, b in zip(dimensions[:-1], dimensions[1:])]
    return RatioTable(
        analysis=analysis, quantity=quantity, dimensions=dimensions, values=values,
        ratios=lyapunov.dimension_ratios(values), predicted_ratios=predicted,
    )


def sweep(
    config: ExperimentConfig,
    dimensions: Sequence[int],
    out_dir=None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> Report:
    """Re-run every analysis per dimension and append cross-dimension ratio tables."""
    config = validate(config)
    ctx = _resolve(config, out_dir, seed, threads)
    dims = sorted(set(int(d) for d in dimensions))
    if not dims:
        raise ConfigValidationError("sweep needs at least one dimension", field="sweep_dimensions")
    report = Report(config=_dump(config), provenance=_provenance(ctx.seed, ctx.threads))

    def one(dimension: int) -> Tuple[int, List[AnalysisOutcome], List[str]]:
        local = ctx.model_copy(update={"suffix": f"_N{dimension}"})
        outcomes, warnings = _run_analyses(config.model.with_dimension(dimension), local, dimension)
        return dimension, outcomes, warnings

    if ctx.threads > 1:
        with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
            results = list(pool.map(one, dims))
    else:
        results = [one(d) for d in dims]

    per_dimension = []
    for dimension, outcomes, warnings in sorted(results, key=lambda r: r[0]):
        report.results.extend(outcomes)
        report.warnings.extend(warnings)
        per_dimension.append((dimension, outcomes))
    report.ratio_tables.extend(_ratio_tables(config, per_dimension))
    if config.parameters.alpha is not None and len(dims) >= 2:
        report.converse.extend(_converse(config, dims, report.warnings))
    return _finish(report, ctx.out_dir)


def _converse(config: ExperimentConfig, dims: List[int], warnings: List[str]) -> List[Dict[str, Any]]:
    """Dimension-uniformity of the Datko and weighted Lyapunov constants for beta > 2/alpha."""
    alpha = config.parameters.alpha
    reports = []

    def builder(dimension: int) -> Generator:
        return build_model(config.model.with_dimension(dimension)).generator

    for beta in config.parameters.betas:
        if beta <= 2.0 / alpha:
            warnings.append(f"converse[beta={_beta_key(beta)}]: below the threshold 2/alpha, skipped")
            continue
        try:
            reports.append(_dump(lyapunov.cor33_converse(builder, dims, alpha, beta)))
        except SemistabError as e:
            logger.error("Converse check failed", beta=beta, error=str(e))
            warnings.append(f"converse[beta={_beta_key(beta)}]: {e}")
    return reports
