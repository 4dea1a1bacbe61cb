"""Tests for noise generation, integrators and replica simulation (glelab.dynamics).

Tests cover:
- Counter-based noise streams and fingerprints
- Euler-Maruyama and OU splitting steps
- Replica engine determinism and budgets
- White-noise rescaling and the coupled Langevin limit
- Trajectory export
"""

import math

import numpy as np
import pytest

from glelab.core.errors import BudgetError, DomainError, ValidationError
from glelab.core.seeding import Stream
from glelab.core.storage import load_series
from glelab.dynamics import (
    EulerMaruyama,
    OUSplitting,
    build_scheme,
    brownian_path,
    brownian_paths,
    export_trajectories,
    limit_noise,
    noise_fingerprint,
    rescale_whitenoise,
    simulate_langevin,
    simulate_paths,
)
from glelab.dynamics.integrators import SplittingCache, step_em, step_splitting
from glelab.dynamics.noise import iter_normals
from glelab.dynamics.simulate import TrajectorySet, check_budget, limit_noise_weights, n_steps_for
from glelab.gle import GleModel, State, build_potential, kernel_mass


def make_model(lam=(1.0,), alpha=(1.0,), beta=1.0, kind="cosine"):
    return GleModel(lam=lam, alpha=alpha, beta=beta, potential=build_potential({"kind": kind}))


# ============================================================================
# Noise Tests
# ============================================================================


class TestNoise:
    """Tests for the Brownian increment streams."""

    def test_chunked_matches_unchunked(self):
        whole = np.concatenate(list(iter_normals(7, 3, 100, 2, 1, chunk=1000)))
        chunked = np.concatenate(list(iter_normals(7, 3, 100, 2, 1, chunk=16)))
        assert whole.shape == (100, 2, 1)
        np.testing.assert_array_equal(whole, chunked)

    def test_replicas_are_independent_streams(self):
        a = brownian_path(7, 0, 50, m=1, d=1, dt=0.1)
        b = brownian_path(7, 1, 50, m=1, d=1, dt=0.1)
        assert not np.allclose(a.increments, b.increments)

    def test_path_is_reproducible(self):
        a = brownian_path(7, 2, 50, m=2, d=1, dt=0.1)
        b = brownian_path(7, 2, 50, m=2, d=1, dt=0.1)
        np.testing.assert_array_equal(a.increments, b.increments)
        assert a.increments.shape == (50, 3, 1)
        assert a.fingerprint == b.fingerprint

    def test_increment_variance(self):
        path = brownian_path(11, 0, 20000, m=1, d=1, dt=0.01)
        assert np.var(path.increments) == pytest.approx(0.01, rel=0.05)

    def test_invalid_dt(self):
        with pytest.raises(ValidationError):
            brownian_path(1, 0, 10, m=1, d=1, dt=0.0)

    def test_fingerprint_depends_on_seed(self):
        a = noise_fingerprint(1, range(4), Stream.BROWNIAN, 0.1, 10, 2)
        b = noise_fingerprint(2, range(4), Stream.BROWNIAN, 0.1, 10, 2)
        assert a != b
        assert a == noise_fingerprint(1, range(4), Stream.BROWNIAN, 0.1, 10, 2)


# ============================================================================
# Integrator Tests
# ============================================================================


class TestIntegrators:
    """Tests for the single-step schemes."""

    def test_em_stiffness_limit(self):
        model = make_model(alpha=(10.0,))
        with pytest.raises(BudgetError) as exc_info:
            EulerMaruyama(model, dt=0.05)
        assert exc_info.value.code == "unstable_step"
        assert EulerMaruyama(model, dt=0.01).dt == 0.01

    def test_em_deterministic_step(self):
        """With zero noise one step is the explicit Euler update of the drift."""
        model = make_model(lam=(2.0,), alpha=(3.0,), kind="zero")
        state = State(q=[1.0], p=[0.5], z=[0.25])
        new = step_em(model, state, 0.01, np.zeros((1, 1)))
        assert new.q[0] == pytest.approx(1.0 + 0.5 * 0.01)
        assert new.p[0] == pytest.approx(0.5 + 2.0 * 0.25 * 0.01)
        assert new.z[0, 0] == pytest.approx(0.25 + (-2.0 * 0.5 - 3.0 * 0.25) * 0.01)

    def test_em_increment_shape(self):
        model = make_model(lam=(1.0, 1.0), alpha=(1.0, 2.0))
        state = State(q=[0.0], p=[0.0], z=[0.0, 0.0])
        with pytest.raises(ValidationError, match="noise increments"):
            step_em(model, state, 0.01, np.zeros((1, 1)))

    def test_splitting_needs_all_channels(self):
        model = make_model(lam=(1.0, 1.0), alpha=(1.0, 2.0))
        state = State(q=[0.0], p=[0.0], z=[0.0, 0.0])
        with pytest.raises(ValidationError) as exc_info:
            step_splitting(model, state, 0.1, np.zeros((2, 1)))
        assert exc_info.value.code == "dimension_mismatch"

    @pytest.mark.parametrize("dt", [0.01, 0.5, 2.0])
    def test_splitting_preserves_gaussian_block(self, dt):
        """The exact OU block keeps the (p, z) marginal of the Gibbs law invariant."""
        model = make_model(lam=(1.0, 0.5), alpha=(2.0, 0.7), beta=1.5)
        cache = SplittingCache.build(model, dt)
        stationary = np.eye(model.m + 1) / model.beta
        propagated = cache.phi @ stationary @ cache.phi.T + cache.sigma
        np.testing.assert_allclose(propagated, stationary, atol=1e-12)

    def test_splitting_sigma_is_psd(self):
        cache = SplittingCache.build(make_model(lam=(1.0, 2.0), alpha=(1.0, 5.0)), 0.1)
        np.testing.assert_allclose(cache.sigma_sqrt @ cache.sigma_sqrt.T, cache.sigma, atol=1e-12)

    def test_build_scheme(self):
        model = make_model()
        assert isinstance(build_scheme("euler_maruyama", model, 0.01), EulerMaruyama)
        assert isinstance(build_scheme("ou_splitting", model, 0.01), OUSplitting)
        with pytest.raises(ValueError):
            build_scheme("leapfrog", model, 0.01)

    def test_invalid_dt(self):
        with pytest.raises(ValidationError) as exc_info:
            OUSplitting(make_model(), dt=-0.1)
        assert exc_info.value.code == "invalid_step"


# ============================================================================
# Simulation Tests
# ============================================================================


class TestSimulatePaths:
    """Tests for the replica engine."""

    def test_shapes_and_times(self):
        model = make_model(lam=(1.0, 0.5), alpha=(1.0, 2.0))
        paths = simulate_paths(model, "ou_splitting", 1.0, 4, seed=3, dt=0.1, stride=2)
        assert paths.n_replicas == 4
        assert paths.m == 2 and paths.d == 1
        np.testing.assert_allclose(paths.times, [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
        assert paths.q.shape == (4, 6, 1)
        assert paths.z.shape == (4, 6, 2, 1)
        assert paths.fingerprint == model.fingerprint

    def test_worker_count_does_not_change_results(self):
        model = make_model()
        one = simulate_paths(model, "ou_splitting", 1.0, 6, seed=5, dt=0.1, workers=1)
        three = simulate_paths(model, "ou_splitting", 1.0, 6, seed=5, dt=0.1, workers=3)
        np.testing.assert_array_equal(one.q, three.q)
        np.testing.assert_array_equal(one.p, three.p)
        np.testing.assert_array_equal(one.z, three.z)
        assert one.noise_fingerprint == three.noise_fingerprint

    def test_seed_changes_results(self):
        model = make_model()
        a = simulate_paths(model, "ou_splitting", 1.0, 2, seed=1, dt=0.1)
        b = simulate_paths(model, "ou_splitting", 1.0, 2, seed=2, dt=0.1)
        assert not np.allclose(a.p, b.p)

    def test_point_init(self):
        model = make_model()
        start = State(q=[0.5], p=[2.0], z=[0.0])
        paths = simulate_paths(
            model, "euler_maruyama", 0.1, 3, seed=1, dt=0.01, init="point", init_state=start
        )
        np.testing.assert_array_equal(paths.q[:, 0, 0], 0.5)
        np.testing.assert_array_equal(paths.p[:, 0, 0], 2.0)

    def test_point_init_needs_state(self):
        with pytest.raises(ValidationError) as exc_info:
            simulate_paths(make_model(), "ou_splitting", 1.0, 2, seed=1, dt=0.1, init="point")
        assert exc_info.value.code == "missing_init"

    def test_unwrapped_positions(self):
        """Lifted positions agree with the torus positions modulo 2 pi."""
        model = make_model(kind="zero")
        start = State(q=[6.0], p=[3.0], z=[0.0])
        paths = simulate_paths(
            model,
            "ou_splitting",
            2.0,
            1,
            seed=1,
            dt=0.1,
            init="point",
            init_state=start,
            deterministic=True,
        )
        assert np.all((paths.q >= 0.0) & (paths.q < 2 * math.pi))
        np.testing.assert_allclose(np.cos(paths.q_unwrapped), np.cos(paths.q), atol=1e-9)
        np.testing.assert_allclose(np.sin(paths.q_unwrapped), np.sin(paths.q), atol=1e-9)
        assert paths.q_unwrapped[0, -1, 0] > 2 * math.pi

    def test_deterministic_free_momentum_decays(self):
        """Without noise and force, the (p, z) block is a dissipative linear flow."""
        model = make_model(kind="zero")
        start = State(q=[0.0], p=[1.0], z=[0.0])
        paths = simulate_paths(
            model,
            "ou_splitting",
            20.0,
            1,
            seed=1,
            dt=0.05,
            init="point",
            init_state=start,
            deterministic=True,
        )
        energy = paths.p[0, :, 0] ** 2 + paths.z[0, :, 0, 0] ** 2
        assert np.all(np.diff(energy) <= 1e-12)
        assert energy[-1] < 1e-2

    def test_scheme_kind_needs_dt(self):
        with pytest.raises(ValidationError, match="dt is required"):
            simulate_paths(make_model(), "ou_splitting", 1.0, 2, seed=1)

    def test_step_budget(self):
        with pytest.raises(BudgetError, match="exceeds budget"):
            simulate_paths(
                make_model(), "ou_splitting", 10.0, 10, seed=1, dt=0.01, budget_steps=5000
            )

    def test_replica_budget(self):
        with pytest.raises(BudgetError, match="replicas"):
            check_budget(10, 300, max_replicas=256)

    def test_horizon_not_whole_steps(self):
        with pytest.raises(ValidationError) as exc_info:
            n_steps_for(1.0, 0.3)
        assert exc_info.value.code == "invalid_step"
        assert n_steps_for(1.0, 0.1) == 10

    def test_times_must_increase(self):
        empty = np.zeros((1, 2, 1))
        with pytest.raises(ValidationError, match="strictly increasing"):
            TrajectorySet(
                times=np.array([0.0, 0.0]),
                q=empty,
                p=empty,
                z=np.zeros((1, 2, 1, 1)),
                q_unwrapped=empty,
                replica_ids=np.arange(1),
                seed=1,
                dt=0.1,
                fingerprint="x",
                noise_fingerprint="y",
            )

    def test_replica_view(self):
        paths = simulate_paths(make_model(), "ou_splitting", 0.5, 3, seed=9, dt=0.1)
        replica = paths.replica(2)
        assert replica.replica_id == 2
        assert replica.rng_stream_id == f"9:2:{int(Stream.BROWNIAN)}"
        assert len(replica) == 6
        np.testing.assert_array_equal(replica.state(0).q, paths.q[2, 0])
        assert len(paths.at(3)) == 3


# ============================================================================
# White-Noise Limit Tests
# ============================================================================


class TestWhiteNoise:
    """Tests for the rescaling and the coupled Langevin paths."""

    @pytest.mark.parametrize("epsilon", [0.5, 0.1, 0.01])
    def test_rescaling_preserves_friction(self, epsilon):
        model = make_model(lam=(1.0, 2.0), alpha=(0.5, 3.0))
        scaled = rescale_whitenoise(model, epsilon)
        assert kernel_mass(scaled) == pytest.approx(kernel_mass(model), rel=1e-12)
        assert scaled.alpha[0] == pytest.approx(0.5 / epsilon)

    def test_rescaling_identity(self):
        model = make_model()
        assert rescale_whitenoise(model, 1.0) is model

    def test_rescaling_needs_positive_epsilon(self):
        with pytest.raises(DomainError, match="epsilon"):
            rescale_whitenoise(make_model(), 0.0)

    def test_explicit_noise_reproduces_seeded_streams(self):
        model = make_model(lam=(1.0, 0.5), alpha=(1.0, 2.0))
        seeded = simulate_paths(model, "euler_maruyama", 0.5, 3, seed=4, dt=0.01)
        noise = brownian_paths(4, range(3), 50, model.m, model.d, 0.01)
        explicit = simulate_paths(model, "euler_maruyama", 0.5, 3, seed=4, dt=0.01, noise=noise)
        np.testing.assert_array_equal(seeded.q, explicit.q)
        np.testing.assert_array_equal(seeded.p, explicit.p)
        np.testing.assert_array_equal(seeded.z, explicit.z)
        assert seeded.noise_fingerprint == explicit.noise_fingerprint

    def test_noise_must_fit_the_run(self):
        model = make_model()
        noise = brownian_paths(4, range(2), 40, model.m, model.d, 0.01)
        with pytest.raises(ValidationError) as exc_info:
            simulate_paths(model, "euler_maruyama", 0.5, 2, seed=4, dt=0.01, noise=noise)
        assert exc_info.value.code == "dimension_mismatch"
        with pytest.raises(ValidationError):
            simulate_paths(model, "euler_maruyama", 0.4, 3, seed=4, dt=0.01, noise=noise)

    def test_combined_noise_is_standard(self):
        path = brownian_path(11, 0, 20000, m=2, d=1, dt=0.01)
        combined = path.combine(np.array([3.0, 4.0]))
        assert combined.n_channels == 1
        assert combined.fingerprint == path.fingerprint
        np.testing.assert_allclose(
            combined.increments[:, 0, 0],
            0.6 * path.increments[:, 0, 0] + 0.8 * path.increments[:, 1, 0],
        )
        assert np.var(combined.increments) == pytest.approx(0.01, rel=0.05)

    def test_coupled_paths_share_noise(self):
        model = make_model(lam=(1.0, 0.5), alpha=(1.0, 2.0))
        gamma = kernel_mass(model)
        noise = brownian_paths(4, range(3), 100, model.m, model.d, 0.01)
        gle = simulate_paths(model, "euler_maruyama", 1.0, 3, seed=4, dt=0.01, noise=noise)
        limit = simulate_langevin(
            gamma,
            model.beta,
            model.potential,
            "euler_maruyama",
            1.0,
            limit_noise(model, gamma, noise),
            init_batch=gle.at(0),
        )
        assert limit.noise_fingerprint == gle.noise_fingerprint
        assert limit.m == 0
        assert limit.n_replicas == 3
        assert limit.dt == pytest.approx(0.01)
        np.testing.assert_array_equal(limit.p[:, 0], gle.p[:, 0])

    def test_limit_noise_matches_summed_mode_noise(self):
        """One Euler step of the limit from p = 0 at V' = 0 is exactly sum_i w_i dW_i."""
        model = make_model(lam=(1.0, 0.5), alpha=(1.0, 2.0), kind="zero")
        gamma = kernel_mass(model)
        noise = brownian_paths(4, range(2), 1, model.m, model.d, 0.01)
        limit = simulate_langevin(
            gamma,
            model.beta,
            model.potential,
            "euler_maruyama",
            0.01,
            limit_noise(model, gamma, noise),
            init_state=State(np.zeros(1), np.zeros(1), np.zeros((0, 1))),
        )
        weights = limit_noise_weights(model)
        expected = [np.dot(weights, path.increments[0, : model.m, 0]) for path in noise]
        np.testing.assert_allclose(limit.p[:, 1, 0], expected, rtol=1e-12)

    def test_coupling_needs_matching_friction(self):
        model = make_model()
        noise = brownian_paths(1, range(2), 100, model.m, model.d, 0.01)
        with pytest.raises(ValidationError) as exc_info:
            limit_noise(model, 2.0 * kernel_mass(model), noise)
        assert exc_info.value.code == "inconsistent_coupling"

    def test_coupling_needs_euler_maruyama(self):
        model = make_model()
        noise = brownian_paths(1, range(2), 100, model.m, model.d, 0.01)
        with pytest.raises(ValidationError) as exc_info:
            simulate_langevin(
                kernel_mass(model),
                model.beta,
                model.potential,
                "ou_splitting",
                1.0,
                limit_noise(model, kernel_mass(model), noise),
            )
        assert exc_info.value.code == "unsupported_scheme"

    def test_seeded_langevin_needs_grid(self):
        with pytest.raises(ValidationError, match="n_replicas"):
            simulate_langevin(
                1.0, 1.0, build_potential({"kind": "cosine"}), "ou_splitting", 1.0, dt=0.1
            )

    def test_langevin_invalid_gamma(self):
        with pytest.raises(DomainError, match="gamma"):
            simulate_langevin(
                0.0,
                1.0,
                build_potential({"kind": "cosine"}),
                "ou_splitting",
                1.0,
                dt=0.1,
                n_replicas=1,
                seed=1,
            )


# ============================================================================
# Export Tests
# ============================================================================


class TestExport:
    """Tests for export_trajectories."""

    def test_columns_and_rows(self, tmp_path):
        model = make_model(lam=(1.0, 0.5), alpha=(1.0, 2.0))
        paths = simulate_paths(model, "ou_splitting", 0.5, 2, seed=1, dt=0.1)
        out = export_trajectories(paths, tmp_path / "trajectories.csv", meta={"scheme": "ou"})
        columns, meta = load_series(out)

        assert list(columns) == ["t", "q0", "p0", "z0_0", "z1_0", "replica_id"]
        assert columns["t"].shape == (12,)
        np.testing.assert_array_equal(columns["replica_id"][:6], 0.0)
        np.testing.assert_allclose(columns["p0"][6:], paths.p[1, :, 0])
        assert meta["model_fingerprint"] == model.fingerprint
        assert meta["seed"] == "1"
        assert meta["scheme"] == "ou"

    def test_export_stride(self, tmp_path):
        paths = simulate_paths(make_model(), "ou_splitting", 1.0, 1, seed=1, dt=0.1)
        columns, _ = load_series(export_trajectories(paths, tmp_path / "t.csv", stride=5))
        np.testing.assert_allclose(columns["t"], [0.0, 0.5, 1.0])
