"""Tests for the glelab CLI.

Tests cover:
- Experiment subcommands and exit codes
- Output formatting (table, json, markdown)
- show with config hash verification
- Error handling
"""

import json

import pytest
import yaml
from typer.testing import CliRunner

from glelab.cli import app

runner = CliRunner()


# ============================================================================
# Test Fixtures
# ============================================================================


@pytest.fixture
def write_config(tmp_path):
    """Write a run config YAML and return its path."""

    def _write(document: dict, name: str = "run.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(document))
        return path

    return _write


@pytest.fixture
def commutators_run(tmp_path):
    """Artifact directory of a passing commutators run."""
    out = tmp_path / "commutators"
    result = runner.invoke(app, ["commutators", "--out", str(out), "--quiet"])
    assert result.exit_code == 0, result.output
    return out


# ============================================================================
# Experiment Command Tests
# ============================================================================


class TestExperimentCommands:
    """Tests for the experiment subcommands."""

    def test_commutators_passes(self, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(app, ["commutators", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "report.json").exists()
        assert (out / "effective-config.yaml").exists()
        assert not (out / "failures.json").exists()

    def test_json_format(self, tmp_path):
        result = runner.invoke(
            app, ["commutators", "--out", str(tmp_path / "out"), "--format", "json"]
        )
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        assert report["kind"] == "commutators"
        assert len(report["verdicts"]) == 12

    def test_markdown_format(self, tmp_path):
        result = runner.invoke(
            app, ["commutators", "--out", str(tmp_path / "out"), "--format", "markdown"]
        )
        assert result.exit_code == 0, result.output
        assert "commutators" in result.stdout

    def test_seed_override(self, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(app, ["commutators", "--out", str(out), "--seed", "42", "-q"])
        assert result.exit_code == 0, result.output
        effective = yaml.safe_load((out / "effective-config.yaml").read_text())
        assert effective["seed"] == 42

    def test_unknown_format(self, tmp_path):
        result = runner.invoke(
            app, ["commutators", "--out", str(tmp_path / "out"), "--format", "xml"]
        )
        assert result.exit_code == 2
        assert "Unknown format" in result.output

    def test_whitenoise_needs_three_epsilons(self, tmp_path, write_config):
        config = write_config({"experiment": {"kind": "whitenoise", "params": {"epsilons": [0.1]}}})
        out = tmp_path / "out"
        result = runner.invoke(app, ["whitenoise", "--config", str(config), "--out", str(out)])
        assert result.exit_code == 1
        assert "need ≥ 3 epsilon values" in result.output
        assert (out / "failures.json").exists()

    def test_unknown_config_key(self, tmp_path, write_config):
        config = write_config({"model": {"gamma": 1.0}})
        result = runner.invoke(
            app, ["simulate", "--config", str(config), "--out", str(tmp_path / "out")]
        )
        assert result.exit_code == 1

    def test_missing_config_file(self, tmp_path):
        result = runner.invoke(
            app, ["simulate", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]
        )
        assert result.exit_code == 1

    def test_budget_override(self, tmp_path):
        result = runner.invoke(
            app, ["simulate", "--out", str(tmp_path / "out"), "--budget-steps", "10", "-q"]
        )
        assert result.exit_code == 1
        assert "budget" in result.output.lower()

    def test_free_poisson(self, tmp_path, write_config):
        config = write_config(
            {
                "model": {"potential": {"kind": "zero"}},
                "numerics": {"basis": {"n_q": 2, "n_p": 4, "n_z": 4}},
                "experiment": {"kind": "poisson", "params": {"rtol": 1e-12}},
            }
        )
        out = tmp_path / "out"
        result = runner.invoke(app, ["poisson", "--config", str(config), "--out", str(out), "-q"])
        assert result.exit_code == 0, result.output
        assert (out / "generator.npz").exists()
        assert (out / "poisson-solution.npz").exists()


# ============================================================================
# Show Command Tests
# ============================================================================


class TestShowCommand:
    """Tests for the show command."""

    def test_show_saved_report(self, commutators_run):
        result = runner.invoke(app, ["show", str(commutators_run), "--format", "json"])
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["kind"] == "commutators"

    def test_show_detects_edited_config(self, commutators_run):
        config_path = commutators_run / "effective-config.yaml"
        effective = yaml.safe_load(config_path.read_text())
        effective["seed"] = effective["seed"] + 1
        config_path.write_text(yaml.safe_dump(effective))

        result = runner.invoke(app, ["show", str(commutators_run)])
        assert result.exit_code == 1
        assert "hash_mismatch" in result.output

        result = runner.invoke(app, ["show", str(commutators_run), "--no-verify"])
        assert result.exit_code == 0, result.output

    def test_show_missing_directory(self, tmp_path):
        result = runner.invoke(app, ["show", str(tmp_path / "missing")])
        assert result.exit_code == 1


class TestExperimentsCommand:
    """Tests for the experiments listing."""

    def test_lists_all_kinds(self):
        result = runner.invoke(app, ["experiments"])
        assert result.exit_code == 0
        for kind in ("simulate", "whitenoise", "poisson", "commutators", "check"):
            assert kind in result.output
