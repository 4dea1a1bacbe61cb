"""Tests for Gibbs sampling, divergence estimators and Lyapunov checks (glelab.sampling)."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import iv

from glelab.core.errors import EstimationError, ValidationError
from glelab.gle import GleModel, StateBatch, build_potential
from glelab.sampling import (
    Binning,
    GibbsSampler,
    LyapunovSpec,
    divergence_report,
    lyapunov_drift_check,
    position_marginal,
    sample_gibbs,
    symbolic_drift,
)
from glelab.sampling.divergence import bin_samples, estimate_relative_entropy
from glelab.sampling.lyapunov import (
    lyapunov_generator,
    lyapunov_value,
    radial_points,
    validate_spec,
)


def torus_model(beta=1.0, m=1, amplitude=1.0):
    return GleModel(
        lam=(1.0,) * m,
        alpha=(1.0,) * m,
        beta=beta,
        potential=build_potential({"kind": "cosine", "params": {"amplitude": amplitude}}),
    )


def confining_model(potential, d=1, beta=1.0):
    return GleModel(
        lam=(1.0,),
        alpha=(1.0,),
        beta=beta,
        potential=build_potential(potential),
        d=d,
        domain_kind="confining",
    )


QUARTIC = {"kind": "polynomial", "params": {"coefficients": [0.0, 0.0, 0.0, 0.0, 1.0]}}


# ============================================================================
# Gibbs Sampler Tests
# ============================================================================


class TestGibbsSampler:
    """Tests for exact Gibbs sampling."""

    def test_strategies(self):
        assert GibbsSampler(torus_model()).strategy == "uniform_rejection"
        assert GibbsSampler(confining_model({"kind": "quadratic"})).strategy == "gaussian"
        assert GibbsSampler(confining_model(QUARTIC)).strategy == "inverse_cdf"

    def test_no_sampler_for_multidimensional_confining(self):
        with pytest.raises(ValidationError) as exc_info:
            GibbsSampler(confining_model(QUARTIC, d=2))
        assert exc_info.value.code == "unsupported_sampler"

    def test_torus_moments(self):
        """Under exp(-beta cos q), E cos q = -I1(beta) / I0(beta)."""
        beta = 1.5
        samples, acceptance = sample_gibbs(torus_model(beta=beta, m=2), 20000, seed=3)
        assert samples.z.shape == (20000, 2, 1)
        assert np.mean(np.cos(samples.q)) == pytest.approx(-iv(1, beta) / iv(0, beta), abs=0.03)
        assert np.var(samples.p) == pytest.approx(1.0 / beta, rel=0.05)
        assert np.var(samples.z) == pytest.approx(1.0 / beta, rel=0.05)
        assert 0.0 < acceptance <= 1.0

    def test_quadratic_positions(self):
        model = confining_model({"kind": "quadratic", "params": {"stiffness": 4.0}}, beta=2.0)
        samples, acceptance = sample_gibbs(model, 20000, seed=1)
        assert np.var(samples.q) == pytest.approx(1.0 / 8.0, rel=0.05)
        assert acceptance == 1.0

    def test_inverse_cdf_positions(self):
        model = confining_model(QUARTIC)
        weight = lambda x: math.exp(-(x**4))  # noqa: E731
        second_moment = quad(lambda x: x**2 * weight(x), -np.inf, np.inf)[0] / quad(
            weight, -np.inf, np.inf
        )[0]
        samples, _ = sample_gibbs(model, 20000, seed=2)
        assert np.mean(samples.q**2) == pytest.approx(second_moment, rel=0.05)

    def test_reproducible(self):
        a, _ = sample_gibbs(torus_model(), 100, seed=9)
        b, _ = sample_gibbs(torus_model(), 100, seed=9)
        np.testing.assert_array_equal(a.q, b.q)
        np.testing.assert_array_equal(a.z, b.z)

    def test_sample_count(self):
        with pytest.raises(ValidationError):
            sample_gibbs(torus_model(), 0, seed=1)


class TestPositionMarginal:
    """Tests for the tabulated q marginal."""

    def test_torus_normalized(self):
        marginal = position_marginal(torus_model(beta=2.0))
        assert marginal.cdf_values[-1] == pytest.approx(1.0)
        assert marginal.mean(lambda x: np.ones_like(x)) == pytest.approx(1.0, rel=1e-6)
        assert marginal.support == (0.0, pytest.approx(2 * math.pi))

    def test_torus_mean_matches_bessel(self):
        beta = 2.0
        marginal = position_marginal(torus_model(beta=beta))
        assert marginal.mean(np.cos) == pytest.approx(-iv(1, beta) / iv(0, beta), abs=1e-6)

    def test_ppf_inverts_cdf(self):
        marginal = position_marginal(confining_model(QUARTIC))
        u = np.array([0.1, 0.5, 0.9])
        np.testing.assert_allclose(marginal.cdf(marginal.ppf(u)), u, atol=1e-6)
        assert marginal.ppf(np.array([0.5]))[0] == pytest.approx(0.0, abs=1e-3)

    def test_periodic_pdf(self):
        marginal = position_marginal(torus_model())
        assert marginal.pdf(np.array([1.0]))[0] == pytest.approx(
            marginal.pdf(np.array([1.0 + 2 * math.pi]))[0]
        )


# ============================================================================
# Divergence Tests
# ============================================================================


class TestDivergence:
    """Tests for the binned entropy, Fisher information and L1 estimators."""

    def test_unknown_coordinate(self):
        with pytest.raises(ValidationError) as exc_info:
            Binning(coords=("x0",))
        assert exc_info.value.code == "invalid_binning"

    def test_bin_count_validation(self):
        with pytest.raises(ValidationError):
            Binning(coords=("q0", "p0"), bins=(8,))

    def test_too_few_samples(self):
        samples, _ = sample_gibbs(torus_model(), 100, seed=1)
        with pytest.raises(EstimationError) as exc_info:
            bin_samples(samples, torus_model(), Binning(bins=64))
        assert exc_info.value.code == "too_few_samples"

    def test_reference_masses_sum_to_one(self):
        model = torus_model()
        samples, _ = sample_gibbs(model, 5000, seed=1)
        binned = bin_samples(samples, model, Binning(coords=("q0", "p0"), bins=(8, 8)))
        assert binned.reference.shape == (8, 8)
        assert binned.reference.sum() + binned.outside_reference == pytest.approx(1.0)
        assert binned.n == 5000

    def test_gibbs_samples_are_close(self):
        model = torus_model()
        samples, _ = sample_gibbs(model, 20000, seed=4)
        report = divergence_report(samples, model, Binning(bins=16), seed=4, n_boot=50)
        assert report.entropy.lo <= 0.01
        assert report.l1 < 0.06
        assert report.pinsker_ok
        assert report.entropy.lo <= report.entropy.value <= report.entropy.hi

    def test_point_mass_is_far(self):
        model = torus_model()
        n = 2000
        samples = StateBatch(
            np.full((n, 1), 1.0), np.zeros((n, 1)), np.zeros((n, 1, 1))
        )
        entropy = estimate_relative_entropy(samples, model, Binning(bins=16), n_boot=20)
        assert entropy.value > 1.0
        assert entropy.method == "binned_kl_miller_madow"

    def test_momentum_marginal(self):
        model = torus_model(beta=2.0)
        samples, _ = sample_gibbs(model, 20000, seed=5)
        report = divergence_report(samples, model, Binning(coords=("p0",), bins=16), n_boot=50)
        assert report.l1 < 0.06
        assert report.to_dict()["pinsker_ok"] is True


# ============================================================================
# Lyapunov Tests
# ============================================================================


class TestLyapunov:
    """Tests for the drift condition of the single-mode system."""

    def test_torus_defaults(self):
        spec = LyapunovSpec.torus_default()
        assert (spec.C_hat, spec.B, spec.C, spec.D, spec.H, spec.a) == (
            2.0,
            13 / 16,
            5 / 8,
            13 / 16,
            3 / 16,
            0.25,
        )

    def test_default_spec_passes_on_torus(self):
        report = lyapunov_drift_check(torus_model(), LyapunovSpec.torus_default())
        assert report.passed
        assert math.isfinite(report.d_hat)
        assert report.min_G >= 1.0
        assert len(report.shell_maxima) == 25

    @pytest.mark.parametrize("power", [1, 2])
    def test_closed_form_matches_symbolic(self, power):
        model = torus_model()
        spec = LyapunovSpec(power=power)
        q, p, r, _ = radial_points(model, n_points=200, r_max=10.0, n_shells=5, seed=1)
        numeric = lyapunov_generator(spec, model, q, p, r)
        oracle = symbolic_drift(spec, model)(q[:, 0], p[:, 0], r[:, 0])
        np.testing.assert_allclose(numeric, oracle, rtol=1e-9, atol=1e-9)

    def test_closed_form_matches_symbolic_confining(self):
        model = confining_model({"kind": "quadratic"})
        spec = LyapunovSpec(C_hat=1.0, A=1.0, B=1.0, C=1.0, D=0.0, E=0.1, F=0.1, H=0.2, M=0.0)
        q, p, r, _ = radial_points(model, n_points=200, r_max=10.0, n_shells=5, seed=2)
        numeric = lyapunov_generator(spec, model, q, p, r)
        oracle = symbolic_drift(spec, model)(q[:, 0], p[:, 0], r[:, 0])
        np.testing.assert_allclose(numeric, oracle, rtol=1e-9, atol=1e-9)

    def test_positivity_violation(self):
        """Too small a constant lets G drop below 1."""
        with pytest.raises(ValidationError) as exc_info:
            validate_spec(LyapunovSpec(C_hat=0.5), torus_model())
        assert exc_info.value.code == "lyapunov_constants"

    def test_torus_rejects_q_terms(self):
        with pytest.raises(ValidationError, match="q-polynomial"):
            validate_spec(LyapunovSpec(A=1.0), torus_model())

    def test_torus_needs_b_and_c_above_h(self):
        with pytest.raises(ValidationError, match="B > H"):
            validate_spec(LyapunovSpec(H=0.9), torus_model())

    def test_single_mode_only(self):
        with pytest.raises(ValidationError) as exc_info:
            lyapunov_drift_check(torus_model(m=2), LyapunovSpec())
        assert exc_info.value.code == "unsupported_model"

    def test_value_at_origin(self):
        model = torus_model()
        zero = np.zeros((1, 1))
        G = lyapunov_value(LyapunovSpec(), model, zero, zero, zero)
        assert G[0] == pytest.approx(2.0 + 13 / 16)
