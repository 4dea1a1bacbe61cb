"""Pathwise discrepancy between two coupled path sets."""

import numpy as np

from ..core.errors import EstimationError
from ..core.logging import get_logger
from ..core.models import EstimateWithCI
from ..core.seeding import Stream, rng_for
from ..dynamics.simulate import TrajectorySet

logger = get_logger(__name__)


def pathwise_discrepancy(
    a: TrajectorySet,
    b: TrajectorySet,
    r: float = 2.0,
    components: tuple[str, ...] = ("q", "p"),
) -> np.ndarray:
    """Per-replica sup_t (|q_a - q_b|^r + |p_a - p_b|^r) on lifted positions.

    ``components=("q",)`` drops the momentum term.
    """
    if a.q.shape[:2] != b.q.shape[:2] or a.d != b.d:
        raise EstimationError(
            f"path sets differ in shape ({a.q.shape} vs {b.q.shape})", code="grid_mismatch"
        )
    if not np.array_equal(a.times, b.times):
        raise EstimationError("path sets are stored on different time grids", code="grid_mismatch")
    if a.noise_fingerprint != b.noise_fingerprint or not np.array_equal(a.replica_ids, b.replica_ids):
        raise EstimationError(
            "path sets are not driven by the same Brownian motions "
            f"(noise fingerprints {a.noise_fingerprint} vs {b.noise_fingerprint})",
            code="uncoupled_noise",
        )
    unknown = set(components) - {"q", "p"}
    if unknown or not components:
        raise EstimationError(f"components must be drawn from q, p (got {components})")
    total = np.zeros(a.q.shape[:2])
    if "q" in components:
        total += np.linalg.norm(a.q_unwrapped - b.q_unwrapped, axis=-1) ** r
    if "p" in components:
        total += np.linalg.norm(a.p - b.p, axis=-1) ** r
    return np.max(total, axis=1)


def strong_error(
    paths_eps: TrajectorySet,
    paths_limit: TrajectorySet,
    r: float = 2.0,
    seed: int = 0,
    n_boot: int = 200,
    components: tuple[str, ...] = ("q", "p"),
) -> EstimateWithCI:
    """E sup_{t <= T} (|Delta q|^r + |Delta p|^r) with a bootstrap CI over replicas.

    Raises:
        EstimationError: Different grids or uncoupled noise
    """
    if not r > 0:
        raise EstimationError(f"r must be > 0 (got {r})")
    values = pathwise_discrepancy(paths_eps, paths_limit, r, components)
    rng = rng_for(seed, 0, Stream.BOOTSTRAP)
    n = len(values)
    boots = [float(values[rng.integers(0, n, n)].mean()) for _ in range(n_boot)]
    estimate = EstimateWithCI.from_bootstrap(
        float(values.mean()), boots, f"strong_sup_{''.join(components)}_r{r:g}", n=n,
        window={"t_max": float(paths_eps.times[-1])},
    )
    logger.debug(f"Strong error (r={r}): {estimate.value:.4g} [{estimate.lo:.4g}, {estimate.hi:.4g}]")
    return estimate
