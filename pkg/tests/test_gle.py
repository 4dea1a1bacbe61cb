"""Tests for the GLE model layer (glelab.gle).

Tests cover:
- Potential registry and derivatives
- GleModel validation and fingerprint
- Memory kernel, friction and fluctuation-dissipation
- Confining admissibility
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from glelab.core.errors import ConfigError, DomainError, ValidationError
from glelab.core.models import DomainKind, ModelConfig
from glelab.gle import (
    GleModel,
    State,
    StateBatch,
    build_model,
    build_potential,
    canonical_embedding,
    check_fdt,
    confining_admissibility,
    gradient_mismatch,
    is_free,
    kernel_eval,
    kernel_mass,
    list_potentials,
)


def make_model(lam=(1.0,), alpha=(1.0,), beta=1.0, kind="cosine", **kwargs):
    return GleModel(
        lam=lam, alpha=alpha, beta=beta, potential=build_potential({"kind": kind}), **kwargs
    )


# ============================================================================
# Potential Tests
# ============================================================================


class TestPotentials:
    """Tests for the potential registry."""

    def test_registry(self):
        assert list_potentials() == ["cosine", "polynomial", "quadratic", "tabulated", "zero"]

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="Unknown potential kind 'morse'"):
            build_potential({"kind": "morse"})

    def test_bad_params(self):
        with pytest.raises(ConfigError, match="Invalid parameters"):
            build_potential({"kind": "cosine", "params": {"depth": 2.0}})

    def test_zero_is_flat_cosine(self):
        zero = build_potential({"kind": "zero"})
        assert zero.is_periodic
        np.testing.assert_array_equal(zero.grad(np.array([[0.3], [2.0]])), 0.0)

    @pytest.mark.parametrize(
        "config",
        [
            {"kind": "cosine", "params": {"amplitude": 1.5}},
            {"kind": "quadratic", "params": {"stiffness": 2.0}},
            {"kind": "polynomial", "params": {"coefficients": [0.0, 0.5, -1.0, 0.0, 0.25]}},
        ],
    )
    def test_gradient_matches_finite_differences(self, config):
        potential = build_potential(config)
        points = np.random.default_rng(0).uniform(-2.0, 2.0, size=(50, 2))
        assert gradient_mismatch(potential, points) < 1e-6

    def test_cosine_values(self):
        cosine = build_potential({"kind": "cosine"})
        q = np.array([[0.0, math.pi]])
        assert cosine.value(q)[0] == pytest.approx(0.0)
        np.testing.assert_allclose(cosine.laplacian(q), [0.0], atol=1e-15)
        np.testing.assert_allclose(cosine.hessian(q)[0], np.diag([-1.0, 1.0]))

    def test_cosine_is_periodic(self):
        cosine = build_potential({"kind": "cosine"})
        q = np.array([[0.7]])
        np.testing.assert_allclose(cosine.value(q), cosine.value(q + 2 * math.pi))

    def test_tabulated_periodic(self):
        """A periodic spline of cos reproduces cos and its derivative closely."""
        grid = np.linspace(0.0, 2 * math.pi, 65)
        tab = build_potential(
            {"kind": "tabulated", "params": {"grid": grid.tolist(), "values": np.cos(grid).tolist(), "periodic": True}}
        )
        x = np.linspace(0.1, 6.0, 40)
        np.testing.assert_allclose(tab.profile(x), np.cos(x), atol=1e-5)
        np.testing.assert_allclose(tab.profile_grad(x), -np.sin(x), atol=1e-3)

    def test_tabulated_periodic_needs_period(self):
        with pytest.raises(DomainError, match="span"):
            build_potential(
                {"kind": "tabulated", "params": {"grid": [0, 1, 2, 3], "values": [0, 1, 1, 0], "periodic": True}}
            )

    def test_quadratic_stiffness(self):
        with pytest.raises(DomainError, match="stiffness"):
            build_potential({"kind": "quadratic", "params": {"stiffness": 0.0}})


# ============================================================================
# Model Tests
# ============================================================================


class TestGleModel:
    """Tests for GleModel construction."""

    def test_basic_properties(self):
        model = make_model(lam=(1.0, 0.5), alpha=(2.0, 4.0), beta=2.0)
        assert model.m == 2
        assert model.is_torus
        np.testing.assert_allclose(model.noise_scale, np.sqrt([2.0, 4.0]))

    def test_linear_drift(self):
        model = make_model(lam=(1.0, 0.5), alpha=(2.0, 4.0))
        expected = np.array([[0.0, -1.0, -0.5], [1.0, 2.0, 0.0], [0.5, 0.0, 4.0]])
        np.testing.assert_array_equal(model.linear_drift(), expected)

    def test_invalid_alpha(self):
        with pytest.raises(DomainError, match=r"alpha\[1\]"):
            make_model(lam=(1.0, 1.0), alpha=(1.0, -2.0))

    def test_invalid_beta(self):
        with pytest.raises(DomainError, match="beta"):
            make_model(beta=0.0)

    def test_domain_consistency(self):
        """A torus needs a periodic potential and vice versa."""
        with pytest.raises(DomainError, match="periodic"):
            make_model(kind="quadratic")
        with pytest.raises(DomainError, match="not confining"):
            make_model(kind="cosine", domain_kind=DomainKind.CONFINING)

    def test_fingerprint(self):
        a = make_model()
        b = make_model()
        c = make_model(beta=2.0)
        assert a.fingerprint == b.fingerprint
        assert a.fingerprint != c.fingerprint
        assert len(a.fingerprint) == 16

    def test_with_params(self):
        model = make_model()
        changed = model.with_params(beta=3.0)
        assert changed.beta == 3.0
        assert changed.fingerprint != model.fingerprint

    def test_is_free(self):
        assert is_free(make_model(kind="zero"))
        assert not is_free(make_model())

    def test_build_model_from_config(self):
        config = ModelConfig.model_validate(
            {"lambda": [2.0], "alpha": [3.0], "beta": 0.5, "potential": {"kind": "cosine"}}
        )
        model = build_model(config)
        assert model.lam == (2.0,)
        assert model.alpha == (3.0,)
        assert model.beta == 0.5

    def test_build_model_rejects_inadmissible(self):
        """A quartic confining potential has an unbounded Hessian."""
        config = ModelConfig.model_validate(
            {
                "domain_kind": "confining",
                "potential": {"kind": "polynomial", "params": {"coefficients": [0, 0, 0, 0, 1]}},
            }
        )
        with pytest.raises(DomainError, match="hessian_bound"):
            build_model(config)
        assert build_model(config, check_admissibility=False).m == 1


class TestStates:
    """Tests for State and StateBatch."""

    def test_state_shapes(self):
        state = State(q=[0.1], p=[0.2], z=[0.3, 0.4])
        assert state.z.shape == (2, 1)
        assert state.is_finite

    def test_inconsistent_state(self):
        with pytest.raises(ValidationError):
            State(q=[0.1, 0.2], p=[0.2], z=[[0.0, 0.0]])

    def test_non_finite(self):
        with pytest.raises(ValidationError, match="non-finite"):
            State(q=[np.nan], p=[0.0], z=[0.0]).require_finite()

    def test_wrapped(self):
        state = State(q=[7.0], p=[0.0], z=[0.0]).wrapped()
        assert state.q[0] == pytest.approx(7.0 - 2 * math.pi)

    def test_batch(self):
        states = [State(q=[float(i)], p=[0.0], z=[0.0]) for i in range(3)]
        batch = StateBatch.stack(states)
        assert len(batch) == 3
        assert batch.state(2).q[0] == 2.0
        assert len(batch.take([0, 2])) == 2


# ============================================================================
# Kernel Tests
# ============================================================================


class TestKernel:
    """Tests for the memory kernel and the friction coefficient."""

    def test_kernel_eval(self):
        model = make_model(lam=(1.0, 2.0), alpha=(1.0, 3.0))
        assert kernel_eval(model, 0.0) == pytest.approx(5.0)
        t = np.array([-1.0, 0.5])
        expected = np.exp(-np.abs(t)) + 4.0 * np.exp(-3.0 * np.abs(t))
        np.testing.assert_allclose(kernel_eval(model, t), expected)

    def test_kernel_mass_matches_integral(self):
        """The friction is the integral of the kernel over [0, inf)."""
        model = make_model(lam=(1.0, 2.0), alpha=(0.5, 3.0))
        integral, _ = quad(lambda s: kernel_eval(model, s), 0.0, np.inf)
        assert kernel_mass(model) == pytest.approx(1.0 / 0.5 + 4.0 / 3.0)
        assert integral == pytest.approx(kernel_mass(model), rel=1e-6)

    def test_fdt_canonical_embedding(self):
        model = make_model(lam=(1.0, 0.3), alpha=(2.0, 0.7), beta=1.7)
        report = check_fdt(*canonical_embedding(model), model.beta)
        assert report.passed
        assert report.residual <= report.tolerance

    def test_fdt_detects_wrong_noise(self):
        A = np.diag([1.0])
        report = check_fdt(A, np.diag([1.0]), beta=1.0)
        assert not report.passed
        assert report.residual == pytest.approx(1.0)

    def test_fdt_dimension_mismatch(self):
        with pytest.raises(ValidationError, match="square"):
            check_fdt(np.eye(2), np.eye(3), beta=1.0)


# ============================================================================
# Admissibility Tests
# ============================================================================


class TestAdmissibility:
    """Tests for confining_admissibility."""

    def test_quadratic_is_admissible(self):
        report = confining_admissibility(build_potential({"kind": "quadratic"}))
        assert report.passed
        assert report.sigma > 0 and report.b > 0

    def test_quartic_fails_hessian_bound(self):
        quartic = build_potential({"kind": "polynomial", "params": {"coefficients": [0, 0, 0, 0, 1]}})
        report = confining_admissibility(quartic)
        assert not report.condition("hessian_bound").passed
        assert report.condition("drift_growth").passed

    def test_periodic_rejected(self):
        with pytest.raises(ValidationError, match="periodic"):
            confining_admissibility(build_potential({"kind": "cosine"}))
