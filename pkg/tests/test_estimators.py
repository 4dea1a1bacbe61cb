"""Tests for decay fits, diffusion estimators and strong errors (glelab.estimators)."""

import numpy as np
import pytest

from glelab.core.errors import EstimationError, ValidationError
from glelab.dynamics import simulate_paths
from glelab.dynamics.simulate import TrajectorySet
from glelab.estimators import (
    fit_exponential_decay,
    green_kubo,
    martingale_diffusion,
    msd_diffusion,
    strong_error,
)
from glelab.estimators.diffusion import autocorrelation, msd_curve
from glelab.gle import GleModel, build_potential, kernel_mass
from glelab.spectral import assemble_generator, build_basis, solve_poisson


def make_model(lam=(1.0,), alpha=(1.0,), beta=1.0, kind="zero"):
    return GleModel(lam=lam, alpha=alpha, beta=beta, potential=build_potential({"kind": kind}))


def synthetic_paths(q, p, dt, noise_fingerprint="shared"):
    """Wrap (R, T, d) arrays as a TrajectorySet with one dummy mode."""
    R, T, d = q.shape
    return TrajectorySet(
        times=dt * np.arange(T),
        q=q,
        p=p,
        z=np.zeros((R, T, 1, d)),
        q_unwrapped=q,
        replica_ids=np.arange(R),
        seed=0,
        dt=dt,
        fingerprint="synthetic",
        noise_fingerprint=noise_fingerprint,
    )


def brownian_positions(R, T, dt, D, seed=0):
    rng = np.random.default_rng(seed)
    steps = rng.standard_normal((R, T - 1, 1)) * np.sqrt(2.0 * D * dt)
    q = np.concatenate([np.zeros((R, 1, 1)), np.cumsum(steps, axis=1)], axis=1)
    p = rng.standard_normal((R, T, 1))
    return q, p


def ar1_momentum(R, T, dt, gamma, seed=0):
    rng = np.random.default_rng(seed)
    rho = np.exp(-gamma * dt)
    p = np.empty((R, T, 1))
    p[:, 0] = rng.standard_normal((R, 1))
    for k in range(1, T):
        p[:, k] = rho * p[:, k - 1] + np.sqrt(1.0 - rho**2) * rng.standard_normal((R, 1))
    return p


# ============================================================================
# Decay Fit Tests
# ============================================================================


class TestDecayFit:
    """Tests for fit_exponential_decay."""

    def test_exact_exponential(self):
        t = np.linspace(0.0, 4.0, 20)
        fit = fit_exponential_decay(t, 3.0 * np.exp(-0.7 * t))
        assert fit.rate.value == pytest.approx(0.7)
        assert fit.amplitude == pytest.approx(3.0)
        assert fit.r2 == pytest.approx(1.0)
        assert fit.rate.hi - fit.rate.lo < 1e-8
        assert fit.rate.window == {"t_min": 0.0, "t_max": 4.0}

    def test_weighted_fit(self):
        t = np.linspace(0.0, 4.0, 20)
        y = np.exp(-t)
        fit = fit_exponential_decay(t, y, sigma=0.01 * y)
        assert fit.rate.value == pytest.approx(1.0)

    def test_zero_width_errors_are_floored(self):
        """Zero standard errors at early times take the smallest positive error."""
        t = np.linspace(0.0, 5.0, 12)
        y = 0.8 * np.exp(-0.4 * t)
        sigma = 0.02 * y
        sigma[:3] = 0.0
        fit = fit_exponential_decay(t, y, sigma=sigma)
        assert np.isfinite(fit.rate.value)
        assert fit.rate.value == pytest.approx(0.4)
        assert fit.amplitude == pytest.approx(0.8)

    def test_explicit_sigma_floor(self):
        t = np.linspace(0.0, 5.0, 12)
        y = np.exp(-0.4 * t)
        fit = fit_exponential_decay(t, y, sigma=np.zeros(12), sigma_floor=1e-3)
        assert fit.rate.value == pytest.approx(0.4)

    def test_all_zero_errors_fit_unweighted(self):
        t = np.linspace(0.0, 5.0, 12)
        y = np.exp(-0.4 * t) * (1.0 + 0.01 * np.cos(7.0 * t))
        weighted = fit_exponential_decay(t, y, sigma=np.zeros(12))
        plain = fit_exponential_decay(t, y)
        assert weighted.rate.value == pytest.approx(plain.rate.value)
        assert weighted.r2 == pytest.approx(plain.r2)

    def test_tiny_errors_do_not_overflow(self):
        t = np.linspace(0.0, 5.0, 12)
        y = np.exp(-0.4 * t)
        sigma = np.full(12, 1e-150)
        sigma[0] = 1e-160
        fit = fit_exponential_decay(t, y, sigma=sigma)
        assert np.isfinite(fit.rate.value)
        assert fit.rate.value == pytest.approx(0.4)

    def test_invalid_sigma(self):
        t = np.linspace(0.0, 5.0, 12)
        with pytest.raises(EstimationError) as exc_info:
            fit_exponential_decay(t, np.exp(-t), sigma=np.full(12, np.nan))
        assert exc_info.value.code == "invalid_sigma"

    def test_noisy_fit_brackets_rate(self):
        rng = np.random.default_rng(1)
        t = np.linspace(0.0, 3.0, 40)
        y = np.exp(-0.5 * t) * np.exp(0.02 * rng.standard_normal(40))
        fit = fit_exponential_decay(t, y)
        assert fit.rate.lo <= 0.5 <= fit.rate.hi

    def test_too_few_points(self):
        with pytest.raises(EstimationError) as exc_info:
            fit_exponential_decay(np.arange(5.0), np.ones(5))
        assert exc_info.value.code == "too_few_points"

    def test_nonpositive_values(self):
        with pytest.raises(EstimationError) as exc_info:
            fit_exponential_decay(np.arange(8.0), np.array([1.0, 0.5, 0.2, 0.0, 0.1, 0.1, 0.1, 0.1]))
        assert exc_info.value.code == "nonpositive_values"

    def test_degenerate_times(self):
        with pytest.raises(EstimationError) as exc_info:
            fit_exponential_decay(np.ones(8), np.linspace(1.0, 2.0, 8))
        assert exc_info.value.code == "degenerate_times"


# ============================================================================
# Diffusion Tests
# ============================================================================


class TestAutocorrelation:
    """Tests for the FFT correlogram."""

    def test_constant_series(self):
        x = np.full((2, 16, 1), 3.0)
        np.testing.assert_allclose(autocorrelation(x), 9.0)

    def test_matches_direct_sum(self):
        x = np.random.default_rng(0).standard_normal((1, 50, 1))
        acf = autocorrelation(x)[0]
        direct = [np.mean(x[0, : 50 - k, 0] * x[0, k:, 0]) for k in range(5)]
        np.testing.assert_allclose(acf[:5], direct)


class TestGreenKubo:
    """Tests for the Green-Kubo estimator."""

    @pytest.mark.parametrize(
        ("lam", "alpha", "beta"),
        [((1.0,), (1.0,), 1.0), ((1.5,), (2.0,), 0.8), ((1.0, 0.5), (2.0, 0.7), 1.3)],
    )
    def test_analytic_free_case(self, lam, alpha, beta):
        """beta D gamma = 1 without a potential."""
        model = make_model(lam=lam, alpha=alpha, beta=beta)
        D = green_kubo(model=model, analytic=True).value
        assert beta * D * kernel_mass(model) == pytest.approx(1.0, rel=1e-12)

    def test_analytic_needs_free_model(self):
        with pytest.raises(ValidationError) as exc_info:
            green_kubo(model=make_model(kind="cosine"), analytic=True)
        assert exc_info.value.code == "analytic_requires_free"

    def test_needs_input(self):
        with pytest.raises(ValidationError):
            green_kubo()

    def test_cut_at_noise_floor(self):
        """The integral stops a few correlation times in, not at max_lag."""
        dt = 0.05
        p = ar1_momentum(100, 600, dt, gamma=1.0, seed=5)
        paths = synthetic_paths(np.zeros_like(p), p, dt)
        estimate = green_kubo(paths, n_boot=20)
        assert estimate.window["max_lag"] == pytest.approx(dt * 299)
        assert 2.0 < estimate.window["t_cut"] < 8.0
        assert estimate.value == pytest.approx(1.0, rel=0.15)

    def test_single_replica(self):
        p = ar1_momentum(1, 200, 0.05, gamma=1.0)
        with pytest.raises(ValidationError):
            green_kubo(synthetic_paths(np.zeros_like(p), p, 0.05))

    @pytest.mark.slow
    def test_exponential_correlogram(self):
        """An OU momentum with unit variance and rate 1 integrates to 1."""
        dt = 0.05
        p = ar1_momentum(200, 2000, dt, gamma=1.0, seed=3)
        paths = synthetic_paths(np.zeros_like(p), p, dt)
        estimate = green_kubo(paths, max_lag=10.0, n_boot=50)
        assert estimate.value == pytest.approx(1.0, rel=0.08)
        assert estimate.window["t_cut"] < 8.0
        assert estimate.lo <= estimate.value <= estimate.hi

    def test_non_decaying(self):
        rng = np.random.default_rng(0)
        p = 1.0 + 0.01 * rng.standard_normal((20, 200, 1))
        paths = synthetic_paths(np.zeros_like(p), p, 0.1)
        with pytest.raises(EstimationError) as exc_info:
            green_kubo(paths, n_boot=10)
        assert exc_info.value.code == "non_decaying_autocorrelation"


class TestMsd:
    """Tests for the mean squared displacement estimator."""

    def test_brownian_positions(self):
        dt = 0.05
        q, p = brownian_positions(1000, 401, dt, D=0.3, seed=1)
        estimate = msd_diffusion(synthetic_paths(q, p, dt), n_boot=50)
        assert estimate.value == pytest.approx(0.3, rel=0.15)
        assert estimate.method == "msd"
        assert estimate.window["r2"] >= 0.95

    def test_msd_curve(self):
        dt = 0.1
        q, p = brownian_positions(50, 101, dt, D=1.0)
        lags, msd = msd_curve(synthetic_paths(q, p, dt), max_lag=10)
        assert lags.shape == msd.shape == (11,)
        assert msd[0] == 0.0

    def test_window_too_short(self):
        dt = 0.05
        q, p = brownian_positions(10, 101, dt, D=1.0)
        with pytest.raises(EstimationError) as exc_info:
            msd_diffusion(synthetic_paths(q, p, dt), window=(0.0, 0.1))
        assert exc_info.value.code == "window_too_short"

    def test_ballistic_transient_never_ends(self):
        """A constant momentum keeps the correlogram at its initial value."""
        dt = 0.1
        p = np.ones((10, 101, 1))
        q = np.cumsum(p, axis=1) * dt
        with pytest.raises(EstimationError) as exc_info:
            msd_diffusion(synthetic_paths(q, p, dt))
        assert exc_info.value.code == "window_too_early"


class TestMartingale:
    """Tests for the martingale estimator."""

    @pytest.mark.slow
    def test_free_case(self):
        model = make_model()
        basis = build_basis(model, 2, 4, 4)
        solution = solve_poisson(assemble_generator(model, basis), rtol=1e-12)
        paths = simulate_paths(model, "ou_splitting", 40.0, 200, seed=2, dt=0.1)
        estimate = martingale_diffusion(paths, solution, n_boot=50, max_lag=5.0)
        assert estimate.value == pytest.approx(1.0, rel=0.3)
        assert estimate.method == "martingale"

    def test_mode_mismatch(self):
        model = make_model()
        solution = solve_poisson(assemble_generator(model, build_basis(model, 2, 2, 2)))
        paths = simulate_paths(
            make_model(lam=(1.0, 1.0), alpha=(1.0, 1.0)), "ou_splitting", 1.0, 2, seed=1, dt=0.1
        )
        with pytest.raises(ValidationError) as exc_info:
            martingale_diffusion(paths, solution)
        assert exc_info.value.code == "dimension_mismatch"


# ============================================================================
# Strong Error Tests
# ============================================================================


class TestStrongError:
    """Tests for the pathwise discrepancy."""

    def test_identical_paths(self):
        q, p = brownian_positions(20, 11, 0.1, D=1.0)
        paths = synthetic_paths(q, p, 0.1)
        estimate = strong_error(paths, paths, n_boot=20)
        assert estimate.value == 0.0
        assert estimate.method == "strong_sup_qp_r2"

    def test_known_offset(self):
        q, p = brownian_positions(20, 11, 0.1, D=1.0)
        a = synthetic_paths(q, p, 0.1)
        b = synthetic_paths(q + 0.5, p, 0.1)
        assert strong_error(a, b, r=2.0, n_boot=20).value == pytest.approx(0.25)
        assert strong_error(a, b, r=1.0, components=("p",), n_boot=20).value == 0.0

    def test_uncoupled_noise(self):
        q, p = brownian_positions(5, 11, 0.1, D=1.0)
        a = synthetic_paths(q, p, 0.1, noise_fingerprint="a")
        b = synthetic_paths(q, p, 0.1, noise_fingerprint="b")
        with pytest.raises(EstimationError) as exc_info:
            strong_error(a, b)
        assert exc_info.value.code == "uncoupled_noise"

    def test_grid_mismatch(self):
        q, p = brownian_positions(5, 11, 0.1, D=1.0)
        a = synthetic_paths(q, p, 0.1)
        b = synthetic_paths(q, p, 0.2)
        with pytest.raises(EstimationError) as exc_info:
            strong_error(a, b)
        assert exc_info.value.code == "grid_mismatch"

    def test_invalid_exponent(self):
        q, p = brownian_positions(5, 11, 0.1, D=1.0)
        paths = synthetic_paths(q, p, 0.1)
        with pytest.raises(EstimationError):
            strong_error(paths, paths, r=0.0)
