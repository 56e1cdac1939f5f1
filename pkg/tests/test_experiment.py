"""
Unit tests for the config-driven experiment runner.
"""

import csv
import json

import numpy as np
import pytest

from src import experiment
from src.exceptions import ConfigValidationError
from src.matrix_io import read_matrix
from src.models.semistab_models import AnalysisKind, ModelConfig


def _diagonal_config(analyses, **parameters):
    return {
        "model": {"kind": "diagonal", "N": 10, "a": 1.0},
        "analyses": analyses,
        "parameters": parameters,
    }


class TestConfig:
    """Test cases for loading and validating experiment documents."""

    def test_load(self, tmp_path):
        """A valid document parses into an ExperimentConfig."""
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps(_diagonal_config(["datko"], p=2, betas=[0.6])))
        config = experiment.load_config(path)
        assert config.analyses == [AnalysisKind.DATKO]
        assert config.parameters.betas == [0.6]

    def test_missing_file(self, tmp_path):
        """A missing config is a validation error."""
        with pytest.raises(ConfigValidationError) as exc_info:
            experiment.load_config(tmp_path / "absent.json")
        assert exc_info.value.error_code == 1

    def test_bad_json(self, tmp_path):
        """Malformed JSON is reported against the config."""
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigValidationError):
            experiment.load_config(path)

    def test_missing_parameter(self):
        """The offending field is named."""
        with pytest.raises(ConfigValidationError) as exc_info:
            experiment.validate(_diagonal_config(["thm42"], betas=[0.5]))
        assert exc_info.value.field == "parameters.tau"

    def test_schema_error(self):
        """Model-level errors carry their location."""
        raw = _diagonal_config(["lyapunov"], betas=[0.5])
        raw["model"]["N"] = 0
        with pytest.raises(ConfigValidationError) as exc_info:
            experiment.validate(raw)
        assert exc_info.value.field.startswith("model")

    def test_sweep_needs_dimensions(self):
        """Listing sweep without dimensions is refused."""
        with pytest.raises(ConfigValidationError) as exc_info:
            experiment.validate(_diagonal_config(["sweep", "lyapunov"], betas=[0.5]))
        assert exc_info.value.field == "sweep_dimensions"


class TestModels:
    """Test cases for model construction and export."""

    def test_diagonal(self):
        """Diagonal models are analysed as given."""
        built = experiment.build_model(ModelConfig(kind="diagonal", N=4, a=1.0))
        assert built.dimension == 4
        assert built.system is None
        assert built.diagonal.N == 4

    def test_damped_wave(self):
        """Damped models are analysed through A_B."""
        built = experiment.build_model(ModelConfig(kind="damped-wave", n=3))
        assert built.system is not None
        assert built.generator is built.system.A_B

    def test_export_roundtrip(self, tmp_path):
        """Exported Matrix Market files rebuild the same model."""
        written = experiment.export_model(ModelConfig(kind="damped-wave", n=3), tmp_path)
        assert [p.name for p in written] == ["A.mtx", "B.mtx", "A_B.mtx"]
        reloaded = experiment.build_model(ModelConfig(
            kind="matrix-file",
            matrix_path=str(tmp_path / "A.mtx"),
            damping_path=str(tmp_path / "B.mtx"),
        ))
        np.testing.assert_allclose(
            reloaded.generator.matrix, read_matrix(tmp_path / "A_B.mtx"), atol=1e-12
        )


class TestRun:
    """Test cases for single runs."""

    def test_resolvent_csv(self, tmp_path):
        """One frequency gives one CSV row and a clean exit."""
        raw = _diagonal_config(["resolvent"], resolvent_grid=[1.0])
        raw["model"]["N"] = 1
        report = experiment.run(experiment.validate(raw), tmp_path)
        assert report.exit_code == 0
        with (tmp_path / "resolvent.csv").open(newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["s", "norm"]
        assert float(rows[1][0]) == 1.0
        assert float(rows[1][1]) == pytest.approx(1.0)
        assert (tmp_path / "report.json").exists()

    def test_failure_recorded(self, tmp_path):
        """An analysis that cannot run is recorded with its exit code."""
        config = experiment.validate(_diagonal_config(["observability"], tau=1.0, betas=[0.5]))
        report = experiment.run(config, tmp_path)
        assert report.exit_code == 1
        assert not report.results[0].success
        assert "damped" in report.results[0].error

    def test_datko_report(self, tmp_path):
        """Certificates are keyed by beta and point at their probe CSV."""
        config = experiment.validate(_diagonal_config(["datko"], p=2, betas=[0.6], alpha=1.0))
        report = experiment.run(config, tmp_path, seed=0x5EED)
        entry = report.results[0].data["certificates"]["0.6"]
        assert (tmp_path / entry["csv"]).exists()
        assert "converse_condition" in entry

    def test_deterministic(self, tmp_path):
        """The same seed writes the same report.json apart from timestamps."""
        config = experiment.validate(_diagonal_config(["datko", "lyapunov"], p=2, betas=[0.6]))
        experiment.run(config, tmp_path / "a", seed=7)
        experiment.run(config, tmp_path / "b", seed=7)
        texts = []
        for name in ("a", "b"):
            report = json.loads((tmp_path / name / "report.json").read_text())
            report["provenance"].pop("started_at")
            report["provenance"].pop("finished_at")
            texts.append(json.dumps(report, sort_keys=True))
        assert texts[0] == texts[1]

    def test_decay_orbit_checks(self, tmp_path):
        """Decay runs also report strong stability and a single-orbit fit."""
        config = experiment.validate(_diagonal_config(["decay"], decay_window=[1.0, 10.0]))
        data = experiment.run(config, tmp_path, seed=3).results[0].data
        assert set(data) == {"fits", "orbit_fit", "strong_stability"}
        assert data["strong_stability"]["status"] in ("PASS", "FAIL")
        assert data["orbit_fit"]["window"] == [1.0, 10.0]

    def test_resolvent_identity(self, tmp_path):
        """Resolvent runs record the n-term identity residuals."""
        config = experiment.validate(_diagonal_config(["resolvent"], resolvent_grid=[1.5, 2.5]))
        data = experiment.run(config, tmp_path).results[0].data
        assert set(data["identity_residuals"]) == {"1", "2", "4"}
        assert all(r <= 1e-10 for r in data["identity_residuals"].values())

    def test_datko_bounds(self, tmp_path):
        """Strong Datko runs check the one-point bound and the exponential baseline."""
        config = experiment.validate(_diagonal_config(["datko"], p=2, betas=[0.6]))
        report = experiment.run(config, tmp_path, seed=0x5EED)
        data = report.results[0].data
        assert data["certificates"]["0.6"]["one_point"]["status"] == "PASS"
        assert data["exponential"]["K0"] > 0
        assert not any("one-point" in w for w in report.warnings)

    def test_weak_datko_halfplane(self, tmp_path):
        """Weak Datko runs check the half-plane resolvent bound."""
        config = experiment.validate(_diagonal_config(["weak-datko"], p=2, betas=[0.5]))
        data = experiment.run(config, tmp_path, seed=0x5EED).results[0].data
        holder = data["certificates"]["0.5"]["holder"]
        assert holder["status"] == "PASS"
        assert holder["K_w_source"] == "exact-strong"

    def test_observability_energy_budget(self, tmp_path):
        """The damped-wave energy budget closes in observability runs."""
        raw = {
            "model": {"kind": "damped-wave", "n": 3},
            "analyses": ["observability"],
            "parameters": {"tau": 1.0, "betas": [0.5]},
        }
        report = experiment.run(experiment.validate(raw), tmp_path, seed=1)
        data = report.results[0].data
        assert abs(data["max_energy_budget_violation"]) <= 1e-8
        assert data["max_dissipation_violation"] <= 1e-8

    def test_report_json(self, tmp_path):
        """report.json carries provenance and the config."""
        config = experiment.validate(_diagonal_config(["lyapunov"], betas=[0.6]))
        experiment.run(config, tmp_path, seed=1, threads=1)
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["provenance"]["seed"] == 1
        assert report["config"]["model"]["kind"] == "diagonal"
        assert report["provenance"]["finished_at"]


class TestSweep:
    """Test cases for dimension sweeps."""

    def test_ratio_table(self, tmp_path):
        """Above the threshold the predicted ratio is flat."""
        config = experiment.validate(_diagonal_config(["datko"], p=2, betas=[0.6]))
        report = experiment.sweep(config, [10, 5], tmp_path)
        assert [o.dimension for o in report.results] == [5, 10]
        table = report.ratio_tables[0]
        assert table.quantity == "K^p[beta=0.6]"
        assert table.dimensions == [5, 10]
        assert table.predicted_ratios == [1.0]
        assert (tmp_path / "datko_probes_0.6_N5.csv").exists()

    def test_single_dimension(self, tmp_path):
        """One dimension has no ratios."""
        config = experiment.validate(_diagonal_config(["lyapunov"], betas=[0.6]))
        assert experiment.sweep(config, [5], tmp_path).ratio_tables == []

    def test_dispatch_from_run(self, tmp_path):
        """``sweep`` in the analysis list runs over sweep_dimensions."""
        raw = _diagonal_config(["sweep", "lyapunov"], betas=[0.6])
        raw["sweep_dimensions"] = [4, 8]
        report = experiment.run(experiment.validate(raw), tmp_path)
        assert [o.dimension for o in report.results] == [4, 8]
        assert report.ratio_tables[0].quantity == "weighted_norm[beta=0.6]"

    def test_threads(self, tmp_path):
        """Threaded sweeps merge results in dimension order."""
        config = experiment.validate(_diagonal_config(["lyapunov"], betas=[0.6]))
        report = experiment.sweep(config, [8, 4, 6], tmp_path, threads=2)
        assert [o.dimension for o in report.results] == [4, 6, 8]

    def test_converse_table(self, tmp_path):
        """With alpha set, sweeps report dimension-uniformity above 2/alpha."""
        config = experiment.validate(
            _diagonal_config(["datko", "lyapunov"], p=2, betas=[0.6, 2.5], alpha=1.0)
        )
        report = experiment.sweep(config, [10, 20], tmp_path, seed=1)
        assert len(report.converse) == 1
        assert report.converse[0]["beta"] == 2.5
        assert report.converse[0]["status"] == "PASS"
        assert any(w.startswith("converse[beta=0.6]") for w in report.warnings)
        saved = json.loads((tmp_path / "report.json").read_text())
        assert saved["converse"][0]["threshold"] == pytest.approx(2.0)
