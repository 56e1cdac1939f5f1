"""
Configuration management for the semigroup stability laboratory.
"""

from pathlib import Path
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class SemistabSettings(BaseSettings):
    """Process-level settings, read from ``SEMISTAB_*`` variables and ``.env``."""

    model_config = SettingsConfigDict(
        env_prefix="SEMISTAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging Configuration
    log_level: str = Field("INFO", description="Log level")
    log_format: str = Field("json", description="Log format")
    log_file: Optional[str] = Field(None, description="Log file path")

    # Execution Configuration
    threads: int = Field(1, description="Worker threads for sweeps and probe loops")
    output_dir: str = Field("results", description="Default report directory")
    tool_version: str = Field("0.1.0", description="Version echoed in reports")

    # Probe Configuration
    probe_seed: int = Field(0x5EED, description="Seed for random probe vectors")
    random_probe_count: int = Field(32, description="Random unit probes per set")

    # Numerical Configuration
    node_budget: int = Field(1_000_000, description="Quadrature node budget")
    quadrature_rel_tol: float = Field(1e-10, description="Default quadrature tolerance")
    condition_threshold: float = Field(
        1e6, description="Eigenvector condition above which spectral paths are refused"
    )
    spectral_tolerance: float = Field(
        1e-10, description="Reconstruction and normality tolerance"
    )
    singularity_tolerance: float = Field(
        1e-12, description="Relative distance to the spectrum treated as singular"
    )
    feasibility_threshold: float = Field(
        1e-12, description="Gramian min/max eigenvalue ratio for feasibility"
    )
    samples_per_decade: int = Field(64, description="Log-spaced samples per decade")
    contamination_threshold: float = Field(
        0.5, description="Tail/global slope gap flagging exponential contamination"
    )
    check_slack: float = Field(1e-6, description="Relative slack of inequality checks")

    @field_validator(
        "threads", "probe_seed", "random_probe_count", "node_budget",
        "samples_per_decade", mode="before",
    )
    @classmethod
    def parse_int_from_string(cls, v):
        """Parse integer from string, accepting hex literals."""
        if isinstance(v, str):
            return int(v, 0)
        return v

    @field_validator(
        "quadrature_rel_tol", "condition_threshold", "spectral_tolerance",
        "singularity_tolerance", "feasibility_threshold",
        "contamination_threshold", "check_slack", mode="before",
    )
    @classmethod
    def parse_float_from_string(cls, v):
        """Parse float from string."""
        if isinstance(v, str):
            return float(v)
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of: {valid_levels}")
        return v.upper()

    @field_validator("log_format")
    @classmethod
    def validate_log_format(cls, v):
        """Validate log format."""
        valid_formats = ["json", "text"]
        if v.lower() not in valid_formats:
            raise ValueError(f"Log format must be one of: {valid_formats}")
        return v.lower()

    @field_validator("threads")
    @classmethod
    def validate_threads(cls, v):
        if v < 1:
            raise ValueError("threads must be at least 1")
        return v

    @property
    def log_file_path(self) -> Optional[Path]:
        """Get log file path as Path object."""
        if self.log_file:
            path = Path(self.log_file)
            path.parent.mkdir(parents=True, exist_ok=True)
            return path
        return None


# Global settings instance - will be None until first access
_settings: Optional[SemistabSettings] = None


def get_settings() -> SemistabSettings:
    """Get the global settings instance."""
    global _settings
    if _settings is None:
        _settings = SemistabSettings()
    return _settings


def reload_settings() -> SemistabSettings:
    """Reload settings from environment variables."""
    global _settings
    _settings = SemistabSettings()
    return _settings
