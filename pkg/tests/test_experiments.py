"""Tests for experiment pipelines and the runner (glelab.experiments).

Tests cover:
- Registry operations
- Per-leg failure handling
- Artifact layout of run_experiment
- Fast pipelines end to end (commutators, poisson, lyapunov, simulate, check)
- Reduced runs of the shipped configurations (slow)
"""

import json
from pathlib import Path

import pytest
import yaml

from glelab.core.errors import BudgetError, ConfigError, ExperimentError, SolverError
from glelab.core.loaders import load_config, parse_config
from glelab.core.models import ExperimentReport
from glelab.core.serialization import config_hash
from glelab.core.storage import load_report, load_series
from glelab.experiments import (
    get_experiment,
    is_experiment_registered,
    list_experiments,
    register_experiment,
    run_experiment,
)
from glelab.experiments.base import RunContext, leg
from glelab.experiments.registry import EXPERIMENT_REGISTRY
from glelab.experiments.runner import failure_list, series_filename


def config_for(kind, params=None, **sections):
    return parse_config({"experiment": {"kind": kind, "params": params or {}}, **sections})


# ============================================================================
# Registry Tests
# ============================================================================


class TestRegistry:
    """Tests for the experiment registry."""

    def test_all_pipelines_registered(self):
        assert list_experiments() == [
            "check",
            "commutators",
            "homogenization",
            "lyapunov",
            "poisson",
            "relaxation",
            "short_time",
            "simulate",
            "whitenoise",
        ]

    def test_get_unknown(self):
        with pytest.raises(ConfigError, match="Unknown experiment 'nope'"):
            get_experiment("nope")

    def test_register_validation(self):
        with pytest.raises(ConfigError, match="cannot be empty"):
            register_experiment("", lambda ctx: None)
        with pytest.raises(ConfigError, match="alphanumeric"):
            register_experiment("bad-kind", lambda ctx: None)
        with pytest.raises(ConfigError, match="callable"):
            register_experiment("fine", "not callable")

    def test_register_and_lookup(self):
        def run_dummy(ctx):
            return ExperimentReport(kind="dummy")

        try:
            register_experiment("dummy", run_dummy)
            assert is_experiment_registered("dummy")
            assert get_experiment("dummy") is run_dummy
        finally:
            EXPERIMENT_REGISTRY.pop("dummy", None)


# ============================================================================
# Leg Handling Tests
# ============================================================================


class TestLeg:
    """Tests for per-leg error handling."""

    def test_numerical_error_becomes_verdict(self):
        report = ExperimentReport(kind="x")
        with leg(report, "solve"):
            raise SolverError("did not converge", residual=1.0)
        assert not report.passed
        assert report.verdicts[0].criterion == "solve"
        assert report.failures[0]["leg"] == "solve"
        assert report.failures[0]["code"] == "solver_failed"

    @pytest.mark.parametrize("error", [BudgetError("too big"), ConfigError("bad key")])
    def test_budget_and_config_errors_propagate(self, error):
        report = ExperimentReport(kind="x")
        with pytest.raises(type(error)):
            with leg(report, "solve"):
                raise error
        assert report.verdicts == []

    def test_failure_list(self):
        report = ExperimentReport(kind="x")
        report.add_verdict("ok", "a", 1.0, "> 0", True)
        report.add_verdict("bad", "b", -1.0, "> 0", False)
        report.failures.append({"leg": "l", "code": "c", "message": "m"})
        failures = failure_list(report)
        assert [f.get("criterion", f.get("leg")) for f in failures] == ["bad", "l"]


class TestRunContext:
    """Tests for RunContext helpers."""

    def test_parse_params_names_path(self):
        ctx = RunContext(config=config_for("poisson", {"rtol": "tight"}))
        from glelab.experiments.poisson import PoissonParams

        with pytest.raises(ConfigError, match="experiment.params.rtol"):
            ctx.parse_params(PoissonParams)

    def test_point_init_state(self):
        config = config_for(
            "simulate", numerics={"init": "point", "init_point": {"q": [0.5], "p": [2.0]}}
        )
        ctx = RunContext(config=config)
        state = ctx.init_state(ctx.model())
        assert state.q[0] == 0.5 and state.p[0] == 2.0
        assert state.z.shape == (1, 1)

    def test_point_init_unknown_key(self):
        config = config_for("simulate", numerics={"init": "point", "init_point": {"x": [0.0]}})
        ctx = RunContext(config=config)
        with pytest.raises(ConfigError, match="Unknown key 'x'"):
            ctx.init_state(ctx.model())

    def test_budget_kwargs(self):
        ctx = RunContext(config=config_for("simulate", budget={"steps": 10, "replicas": 2}))
        assert ctx.budget_kwargs() == {"budget_steps": 10, "max_replicas": 2}


# ============================================================================
# Pipeline Tests
# ============================================================================


class TestPipelines:
    """End-to-end runs of the fast pipelines."""

    def test_commutators(self):
        result = run_experiment(config_for("commutators"))
        assert result.passed
        assert len(result.report.verdicts) == 12
        assert result.out_dir is None and result.artifacts == []

    def test_free_poisson(self):
        config = config_for(
            "poisson",
            {"rtol": 1e-12},
            model={"potential": {"kind": "zero"}, "lambda": [1.5], "alpha": [2.0], "beta": 0.8},
            numerics={"basis": {"n_q": 2, "n_p": 4, "n_z": 4}},
        )
        report = run_experiment(config).report
        assert report.passed
        assert report.values["D"] == pytest.approx(2.0 / (0.8 * 1.5**2), rel=1e-8)
        assert {v.criterion for v in report.verdicts} == {
            "poisson_residual",
            "diffusion_bound",
            "poisson_exact",
        }

    def test_lyapunov_default_constants(self):
        report = run_experiment(config_for("lyapunov", {"n_points": 2000, "oracle_points": 200})).report
        assert report.passed

    def test_simulate_is_deterministic(self):
        config = config_for(
            "simulate", {"export": False}, numerics={"horizon": 0.5, "dt": 0.05, "replicas": 16}
        )
        a = run_experiment(config, workers=1).report
        b = run_experiment(config, workers=4).report
        assert a.series == b.series
        assert a.values["noise_fingerprint"] == b.values["noise_fingerprint"]

    def test_simulate_budget(self):
        config = config_for(
            "simulate", numerics={"horizon": 10.0, "dt": 0.01, "replicas": 64}, budget={"steps": 1000}
        )
        with pytest.raises(BudgetError):
            run_experiment(config)

    def test_whitenoise_needs_three_epsilons(self, tmp_path):
        config = config_for("whitenoise", {"epsilons": [0.1]})
        with pytest.raises(ExperimentError, match="need ≥ 3 epsilon values"):
            run_experiment(config, out_dir=tmp_path)
        failures = json.loads((tmp_path / "failures.json").read_text())
        assert failures[0]["leg"] == "whitenoise"
        assert failures[0]["code"] == "too_few_epsilons"

    def test_check_suite(self):
        config = config_for(
            "check",
            {"random_kernels": 3, "random_vectors": 5, "stationarity_replicas": 128},
        )
        report = run_experiment(config).report
        names = {v.criterion for v in report.verdicts}
        assert {"fdt", "commutators", "friction_formula", "free_poisson"} <= names
        for criterion in ("fdt", "friction_formula", "green_kubo_analytic", "free_poisson"):
            assert all(v.passed for v in report.verdicts if v.criterion == criterion)


# ============================================================================
# Shipped Configuration Tests
# ============================================================================

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def shipped(name, **overrides):
    return load_config(CONFIG_DIR / name, overrides)


def verdicts_named(report, criterion):
    found = [v for v in report.verdicts if v.criterion == criterion]
    assert found, f"no {criterion} verdict"
    return found


@pytest.mark.slow
class TestShippedPipelines:
    """Reduced runs of the shipped Monte Carlo and spectral configurations."""

    def test_free_homogenization(self):
        config = shipped(
            "free-homogenization.yaml",
            experiment={"params": {"n_boot": 50, "free_tolerance": 0.15, "mc_tolerance": 0.2, "poisson_tolerance": 1e-6}},
        )
        report = run_experiment(config, workers=2).report
        assert report.passed, failure_list(report)
        for criterion in ("diffusion_bound", "msd_green_kubo_agreement", "mc_vs_reference", "poisson_exact"):
            verdicts_named(report, criterion)

    def test_short_time(self):
        config = shipped(
            "shorttime.yaml",
            numerics={"basis": {"n_q": 8, "n_p": 8, "n_z": 4}},
            experiment={"params": {"n_initial": 2}},
        )
        report = run_experiment(config).report
        assert all(v.passed for v in verdicts_named(report, "commutator_preflight"))
        bounds = verdicts_named(report, "short_time_bound")
        assert len(bounds) == 3
        assert all(v.passed for v in bounds), [v.model_dump() for v in bounds]
        assert len(verdicts_named(report, "short_time_exponent")) == 3
        t_lo, t_hi = report.values["window"]
        assert 0.0 < t_lo < t_hi <= 0.5
        assert report.failures == []

    def test_relaxation(self):
        config = shipped("relaxation.yaml", experiment={"params": {"n_boot": 50}})
        report = run_experiment(config, workers=2).report
        assert report.values["spectral_gap_change"] <= 0.02
        assert "semigroup_rate_p2" in report.estimates
        for criterion in ("pinsker", "entropy_monotone", "observable_rate_vs_gap", "observable_rate_vs_semigroup"):
            assert all(v.passed for v in verdicts_named(report, criterion)), criterion

    def test_whitenoise(self):
        report = run_experiment(shipped("whitenoise.yaml"), workers=2).report
        assert report.passed, failure_list(report)
        assert len(verdicts_named(report, "strong_order")) == 1


# ============================================================================
# Artifact Tests
# ============================================================================


class TestArtifacts:
    """Tests for the files run_experiment writes."""

    def test_layout(self, tmp_path):
        config = config_for("simulate", numerics={"horizon": 0.2, "dt": 0.05, "replicas": 4})
        result = run_experiment(config, out_dir=tmp_path)
        for name in ("effective-config.yaml", "report.json", "report.md", "timing.json"):
            assert (tmp_path / name).exists(), name
        assert (tmp_path / series_filename("moments")).exists()
        assert "total" in json.loads((tmp_path / "timing.json").read_text())
        assert len(result.artifacts) >= 5

    def test_report_round_trip(self, tmp_path):
        config = config_for("commutators", seed=7)
        result = run_experiment(config, out_dir=tmp_path)
        loaded = load_report(tmp_path)
        assert loaded.model_dump() == result.report.model_dump()
        effective = yaml.safe_load((tmp_path / "effective-config.yaml").read_text())
        assert config_hash(effective) == loaded.config_hash
        assert not (tmp_path / "failures.json").exists()

    def test_out_does_not_change_hash(self, tmp_path):
        a = run_experiment(config_for("commutators", out="a")).report
        b = run_experiment(config_for("commutators", out="b")).report
        assert a.config_hash == b.config_hash

    def test_series_provenance(self, tmp_path):
        config = config_for(
            "simulate", {"export": False}, numerics={"horizon": 0.2, "dt": 0.05, "replicas": 4}, seed=5
        )
        result = run_experiment(config, out_dir=tmp_path)
        columns, meta = load_series(tmp_path / series_filename("moments"))
        assert meta["seed"] == "5"
        assert meta["config_hash"] == result.report.config_hash
        assert meta["model_fingerprint"] == result.report.model_fingerprint
        assert list(columns) == ["t", "mean_p2", "mean_z2", "mean_V"]

    def test_failed_run_writes_failures(self, tmp_path):
        config = config_for(
            "poisson", {"free_tolerance": -1.0}, model={"potential": {"kind": "zero"}},
            numerics={"basis": {"n_q": 2, "n_p": 3, "n_z": 3}},
        )
        result = run_experiment(config, out_dir=tmp_path)
        assert not result.passed
        failures = json.loads((tmp_path / "failures.json").read_text())
        assert [f["criterion"] for f in failures] == ["poisson_exact"]
