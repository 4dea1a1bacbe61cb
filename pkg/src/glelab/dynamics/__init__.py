"""Path simulation: noise streams, integrators and trajectory export."""

from .integrators import EulerMaruyama, IntegratorScheme, OUSplitting, build_scheme
from .noise import NoisePath, brownian_path, brownian_paths, noise_fingerprint
from .simulate import (
    Trajectory,
    TrajectorySet,
    export_trajectories,
    limit_noise,
    rescale_whitenoise,
    simulate_langevin,
    simulate_paths,
)

__all__ = [
    "IntegratorScheme",
    "EulerMaruyama",
    "OUSplitting",
    "build_scheme",
    "NoisePath",
    "brownian_path",
    "brownian_paths",
    "noise_fingerprint",
    "Trajectory",
    "TrajectorySet",
    "simulate_paths",
    "simulate_langevin",
    "rescale_whitenoise",
    "limit_noise",
    "export_trajectories",
]
