"""
Unit tests for the report and configuration models.
"""

import pytest
from pydantic import ValidationError

from src.models.semistab_models import (
    AnalysisKind,
    AnalysisOutcome,
    ExperimentConfig,
    ExperimentParameters,
    ModelConfig,
    Provenance,
    Report,
)


class TestModelConfig:
    """Test cases for model selection."""

    def test_diagonal_requires_fields(self):
        """Diagonal models need N and a."""
        with pytest.raises(ValidationError):
            ModelConfig(kind="diagonal", N=10)

    def test_with_dimension(self):
        """The truncation dimension is replaced per family."""
        assert ModelConfig(kind="diagonal", N=10, a=1.0).with_dimension(20).N == 20
        assert ModelConfig(kind="damped-wave", n=5).with_dimension(8).n == 8

    def test_weight_kind(self):
        """Only inverse and fractional weights exist."""
        with pytest.raises(ValidationError):
            ExperimentParameters(weight="resolvent")

    def test_missing_parameters(self):
        """Each analysis declares what it needs."""
        config = ExperimentConfig(
            model=ModelConfig(kind="diagonal", N=4, a=1.0),
            analyses=["datko", "observability"],
            parameters=ExperimentParameters(betas=[0.5]),
        )
        assert config.missing_parameters() == ["parameters.p", "parameters.tau"]


class TestReport:
    """Test cases for report aggregation."""

    def _report(self, *codes):
        results = [
            AnalysisOutcome(analysis=AnalysisKind.DATKO, success=code == 0,
                            error_code=code or None)
            for code in codes
        ]
        return Report(config={}, results=results,
                      provenance=Provenance(tool_version="test", seed=0, threads=1))

    def test_exit_code_clean(self):
        """All successes exit 0."""
        assert self._report(0, 0).exit_code == 0

    def test_exit_code_worst(self):
        """The largest failure code wins."""
        assert self._report(0, 1, 2).exit_code == 2
