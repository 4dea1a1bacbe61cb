"""Replica simulation of the extended system and of its white-noise limit.

Replicas are independent: replica r reads its Brownian increments from
stream (seed, r, BROWNIAN) and, for random initial laws, its initial state
from stream (seed, r, INITIAL). Replica chunks run on a thread pool and are
written back by index, so outputs do not depend on the worker count.
"""

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..core.errors import BudgetError, DomainError, ValidationError
from ..core.logging import get_logger
from ..core.models import InitKind, SchemeKind
from ..core.seeding import Stream, rng_for
from ..core.storage import save_series
from ..gle.model import GleModel, State, StateBatch, kernel_mass
from ..gle.potentials import Potential
from ..sampling.gibbs import GibbsSampler
from .integrators import IntegratorScheme, build_scheme
from .noise import DEFAULT_CHUNK, NoisePath, iter_normals, noise_fingerprint, paths_fingerprint

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_BUDGET_STEPS = 1_000_000
DEFAULT_MAX_REPLICAS = 256

# Parameters: (completed_replicas, total_replicas)
ProgressCallback = Callable[[int, int], None]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One replica path."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    z: np.ndarray
    replica_id: int
    rng_stream_id: str
    fingerprint: str

    def __len__(self) -> int:
        return self.times.shape[0]

    def state(self, k: int) -> State:
        return State(self.q[k], self.p[k], self.z[k])


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """Paths of n replicas on a shared time grid.

    Shapes: times (T,), q and p (R, T, d), z (R, T, m, d). ``q_unwrapped``
    holds the lifted positions on the torus (needed for displacements).
    """

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    z: np.ndarray
    q_unwrapped: np.ndarray
    replica_ids: np.ndarray
    seed: int
    dt: float
    fingerprint: str
    noise_fingerprint: str
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("trajectory times must be strictly increasing")
        if self.q.shape[1] != self.times.shape[0]:
            raise ValidationError(
                f"states ({self.q.shape[1]}) and times ({self.times.shape[0]}) differ in length"
            )

    @property
    def n_replicas(self) -> int:
        return self.q.shape[0]

    @property
    def d(self) -> int:
        return self.q.shape[-1]

    @property
    def m(self) -> int:
        return self.z.shape[-2]

    def replica(self, index: int) -> Trajectory:
        return Trajectory(
            times=self.times,
            q=self.q[index],
            p=self.p[index],
            z=self.z[index],
            replica_id=int(self.replica_ids[index]),
            rng_stream_id=f"{self.seed}:{int(self.replica_ids[index])}:{int(Stream.BROWNIAN)}",
            fingerprint=self.fingerprint,
        )

    def at(self, k: int) -> StateBatch:
        """Ensemble snapshot at stored time index k."""
        return StateBatch(self.q[:, k], self.p[:, k], self.z[:, k])


# ============================================================================
# Budget and model transforms
# ============================================================================


def check_budget(
    n_steps: int,
    n_replicas: int,
    budget_steps: int = DEFAULT_BUDGET_STEPS,
    max_replicas: int = DEFAULT_MAX_REPLICAS,
) -> None:
    """Raise BudgetError before launch when a run is too large."""
    if n_replicas < 1:
        raise ValidationError(f"n_replicas must be >= 1 (got {n_replicas})")
    if n_replicas > max_replicas:
        raise BudgetError(
            f"Requested {n_replicas} replicas exceeds budget {max_replicas}",
            details={"replicas": n_replicas, "budget": max_replicas},
        )
    total = n_steps * n_replicas
    if total > budget_steps:
        raise BudgetError(
            f"Requested {total:,} integrator steps exceeds budget {budget_steps:,}",
            details={"steps": total, "budget": budget_steps},
        )


def n_steps_for(horizon: float, dt: float) -> int:
    if not horizon > 0 or not dt > 0:
        raise ValidationError(f"horizon and dt must be > 0 (got {horizon}, {dt})")
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValidationError(
            f"horizon {horizon} is not a whole number of steps of dt={dt}",
            code="invalid_step",
        )
    return n


def rescale_whitenoise(model: GleModel, epsilon: float) -> GleModel:
    """lambda_j -> lambda_j / sqrt(eps), alpha_j -> alpha_j / eps; all else unchanged."""
    if not epsilon > 0:
        raise DomainError(f"epsilon must be > 0 (got {epsilon})", path="epsilon")
    if epsilon == 1.0:
        return model
    root = math.sqrt(epsilon)
    return model.with_params(
        lam=tuple(x / root for x in model.lam),
        alpha=tuple(a / epsilon for a in model.alpha),
    )


def limit_noise_weights(model: GleModel) -> np.ndarray:
    """Per-mode weights sqrt(2 lambda_i**2 / (alpha_i beta)) of the limiting Langevin noise."""
    return np.sqrt(2.0 * model.lam_array**2 / (model.alpha_array * model.beta))


# ============================================================================
# Initial states
# ============================================================================


def initial_states(
    model: GleModel,
    replica_ids: np.ndarray,
    seed: int,
    init: InitKind,
    init_state: State | None = None,
    init_sampler: Callable[[np.random.Generator], State] | None = None,
) -> StateBatch:
    """Initial states for a block of replicas (replica r uses stream (seed, r, INITIAL))."""
    init = InitKind(init)
    if init is InitKind.POINT:
        if init_state is None:
            raise ValidationError("init 'point' needs an initial state", code="missing_init")
        s = init_state.require_finite()
        if s.z.shape != (model.m, model.d) or s.q.shape != (model.d,):
            raise ValidationError(
                f"initial state shape q{s.q.shape}, z{s.z.shape} does not match "
                f"d={model.d}, m={model.m}",
                code="dimension_mismatch",
            )
        n = len(replica_ids)
        return StateBatch(
            np.tile(s.q, (n, 1)), np.tile(s.p, (n, 1)), np.tile(s.z, (n, 1, 1))
        )

    if init is InitKind.CUSTOM:
        if init_sampler is None:
            raise ValidationError("init 'custom' needs a sampler", code="missing_init")
        return StateBatch.stack(
            [init_sampler(rng_for(seed, int(r), Stream.INITIAL)) for r in replica_ids]
        )

    sampler = GibbsSampler(model)
    draws = [sampler.sample(1, rng_for(seed, int(r), Stream.INITIAL)) for r in replica_ids]
    return StateBatch(
        np.concatenate([s.q for s in draws]),
        np.concatenate([s.p for s in draws]),
        np.concatenate([s.z for s in draws]),
    )


# ============================================================================
# Replica engine
# ============================================================================


StepFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], tuple]


def _integrate_block(
    advance: StepFn,
    start: StateBatch,
    replica_ids: np.ndarray,
    seed: int,
    n_steps: int,
    stride: int,
    n_channels: int,
    torus: bool,
    noise_factor: float,
    dt: float,
    noise: Sequence[NoisePath] | None = None,
) -> tuple[np.ndarray, ...]:
    """Integrate a block of replicas, storing every ``stride``-th state.

    Increments come from the seeded streams of ``replica_ids``, or from
    ``noise[r]`` when explicit noise paths are given.
    """
    q, p, z = start.q.copy(), start.p.copy(), start.z.copy()
    lift = q.copy()
    n_store = n_steps // stride + 1
    R = q.shape[0]
    out_q = np.empty((R, n_store) + q.shape[1:])
    out_u = np.empty_like(out_q)
    out_p = np.empty_like(out_q)
    out_z = np.empty((R, n_store) + z.shape[1:])
    out_q[:, 0], out_u[:, 0], out_p[:, 0], out_z[:, 0] = q, lift, p, z

    d = q.shape[-1]
    if noise is None:
        streams = [
            iter_normals(seed, int(r), n_steps, n_channels, d, chunk=DEFAULT_CHUNK)
            for r in replica_ids
        ]
        scale = math.sqrt(dt) * noise_factor
    else:
        streams = [noise[int(r)].chunks(DEFAULT_CHUNK) for r in replica_ids]
        scale = noise_factor
    step = 0
    while step < n_steps:
        block = np.stack([next(s) for s in streams], axis=1) * scale
        for k in range(block.shape[0]):
            q_prev = q
            q, p, z = advance(q, p, z, block[k])
            delta = q - q_prev
            if torus:
                delta = (delta + math.pi) % TWO_PI - math.pi
            lift = lift + delta
            step += 1
            if step % stride == 0:
                j = step // stride
                out_q[:, j], out_u[:, j], out_p[:, j], out_z[:, j] = q, lift, p, z
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(z))):
        raise ValidationError(
            "simulation produced non-finite states; reduce dt", code="non_finite_state"
        )
    return out_q, out_u, out_p, out_z


def _check_noise(
    noise: Sequence[NoisePath], n_replicas: int, n_steps: int, dt: float, n_channels: int, d: int
) -> str:
    """Validate explicit noise paths against a run and return their fingerprint."""
    if len(noise) != n_replicas:
        raise ValidationError(
            f"{len(noise)} noise paths for {n_replicas} replicas", code="dimension_mismatch"
        )
    fingerprint = paths_fingerprint(noise)
    first = noise[0]
    if first.n_steps != n_steps or not math.isclose(first.dt, dt, rel_tol=1e-12):
        raise ValidationError(
            f"noise paths have {first.n_steps} steps of {first.dt:g}, the run needs "
            f"{n_steps} steps of {dt:g}",
            code="dimension_mismatch",
        )
    if first.n_channels < n_channels or first.d != d:
        raise ValidationError(
            f"noise paths carry {first.n_channels} channels in d={first.d}, "
            f"the run needs {n_channels} in d={d}",
            code="dimension_mismatch",
        )
    return fingerprint


def _run_blocks(
    run_block: Callable[[np.ndarray], tuple[np.ndarray, ...]],
    n_replicas: int,
    workers: int,
    progress_callback: ProgressCallback | None,
) -> list[np.ndarray]:
    """Run replica blocks concurrently and reassemble them in replica order."""
    ids = np.arange(n_replicas)
    n_blocks = max(1, min(workers, n_replicas))
    blocks = np.array_split(ids, n_blocks)
    results: list[tuple | None] = [None] * len(blocks)
    done = 0
    with ThreadPoolExecutor(max_workers=n_blocks) as executor:
        futures = {executor.submit(run_block, block): i for i, block in enumerate(blocks)}
        for future in as_completed(futures):
            i = futures[future]
            results[i] = future.result()
            done += len(blocks[i])
            if progress_callback:
                progress_callback(done, n_replicas)
    return [np.concatenate([r[k] for r in results]) for k in range(len(results[0]))]


def simulate_paths(
    model: GleModel,
    scheme: SchemeKind | str | IntegratorScheme,
    horizon: float,
    n_replicas: int,
    seed: int,
    init: InitKind | str = InitKind.GIBBS,
    *,
    dt: float | None = None,
    init_state: State | None = None,
    init_sampler: Callable[[np.random.Generator], State] | None = None,
    stride: int = 1,
    workers: int = 1,
    budget_steps: int = DEFAULT_BUDGET_STEPS,
    max_replicas: int = DEFAULT_MAX_REPLICAS,
    deterministic: bool = False,
    progress_callback: ProgressCallback | None = None,
    noise: Sequence[NoisePath] | None = None,
) -> TrajectorySet:
    """Simulate n independent replicas of the extended system.

    Args:
        model: The model
        scheme: Scheme kind (then ``dt`` is required) or a built scheme
        horizon: Final time (a whole number of steps)
        n_replicas: Number of replicas
        seed: Master seed
        init: ``gibbs``, ``point`` (needs ``init_state``) or ``custom``
            (needs ``init_sampler(rng) -> State``)
        stride: Store every stride-th step
        workers: Thread count; does not change results
        deterministic: Zero the noise (deterministic drift only)
        noise: Explicit per-replica noise paths (replica r reads ``noise[r]``)
            instead of the seeded streams

    Raises:
        BudgetError: Step/replica budget exceeded or unstable explicit step
        ValidationError: Noise paths that do not fit the run
    """
    if isinstance(scheme, IntegratorScheme):
        integrator = scheme
    else:
        if dt is None:
            raise ValidationError("dt is required when the scheme is given by kind")
        integrator = build_scheme(scheme, model, dt)
    n_steps = n_steps_for(horizon, integrator.dt)
    check_budget(n_steps, n_replicas, budget_steps, max_replicas)
    if stride < 1:
        raise ValidationError(f"stride must be >= 1 (got {stride})")
    if noise is None:
        noise_id = noise_fingerprint(
            seed, range(n_replicas), Stream.BROWNIAN, integrator.dt, n_steps, model.m + 1
        )
    else:
        noise_id = _check_noise(noise, n_replicas, n_steps, integrator.dt, model.m + 1, model.d)

    logger.info(
        f"Simulating {n_replicas} replicas x {n_steps} steps "
        f"({integrator.kind.value}, dt={integrator.dt}, workers={workers})"
    )

    def run_block(ids: np.ndarray):
        start = initial_states(model, ids, seed, init, init_state, init_sampler)
        return _integrate_block(
            integrator.advance,
            start,
            ids,
            seed,
            n_steps,
            stride,
            model.m + 1,
            model.is_torus,
            0.0 if deterministic else 1.0,
            integrator.dt,
            noise,
        )

    q, lift, p, z = _run_blocks(run_block, n_replicas, workers, progress_callback)
    times = integrator.dt * np.arange(0, n_steps + 1, stride)
    return TrajectorySet(
        times=times,
        q=q,
        p=p,
        z=z,
        q_unwrapped=lift,
        replica_ids=np.arange(n_replicas),
        seed=int(seed),
        dt=integrator.dt,
        fingerprint=model.fingerprint,
        noise_fingerprint=noise_id,
        metadata={"scheme": integrator.kind.value, "stride": stride},
    )


# ============================================================================
# Limiting Langevin dynamics
# ============================================================================


class LangevinStep:
    """Euler-Maruyama or exact-OU splitting step for the Langevin equation, driven by channel 0."""

    def __init__(
        self,
        gamma: float,
        beta: float,
        potential: Potential,
        dt: float,
        scheme: SchemeKind,
        torus: bool,
    ):
        self.gamma, self.beta, self.potential, self.dt = gamma, beta, potential, dt
        self.scheme = SchemeKind(scheme)
        self.torus = torus
        self._intensity = math.sqrt(2.0 * gamma / beta)
        if self.scheme is SchemeKind.OU_SPLITTING:
            self._decay = math.exp(-gamma * dt)
            self._kick = -math.expm1(-gamma * dt) / gamma
            self._spread = math.sqrt(-math.expm1(-2.0 * gamma * dt) / beta)

    def advance(self, q, p, z, increments):
        if self.scheme is SchemeKind.EULER_MARUYAMA:
            noise = self._intensity * increments[..., 0, :]
            q_new = q + p * self.dt
            p_new = p + (-self.potential.grad(q) - self.gamma * p) * self.dt + noise
        else:
            half = 0.5 * self.dt
            q_mid = q + p * half
            xi = increments[..., 0, :] / math.sqrt(self.dt)
            p_new = (
                self._decay * p
                + self._kick * (-self.potential.grad(q_mid))
                + self._spread * xi
            )
            q_new = q_mid + p_new * half
        if self.torus:
            q_new = np.mod(q_new, TWO_PI)
        return q_new, p_new, z


def limit_noise(model: GleModel, gamma: float, noise: Sequence[NoisePath]) -> list[NoisePath]:
    """Brownian paths of the Langevin limit of ``model``, built from its noise paths.

    Each replica gets W = sum_i w_i W_i / |w| with the weights of
    ``limit_noise_weights``, so sqrt(2 gamma / beta) W equals the summed
    mode noise exactly when gamma is the kernel mass.

    Raises:
        ValidationError: gamma differs from the kernel mass of ``model``
    """
    weights = limit_noise_weights(model)
    total = float(np.sum(weights**2))
    if not math.isclose(total, 2.0 * gamma / model.beta, rel_tol=1e-10):
        raise ValidationError(
            f"coupled noise intensity {total:.6g} != 2 gamma / beta "
            f"{2.0 * gamma / model.beta:.6g}; gamma must equal {kernel_mass(model):.6g}",
            code="inconsistent_coupling",
        )
    return [path.combine(weights) for path in noise]


def simulate_langevin(
    gamma: float,
    beta: float,
    potential: Potential,
    scheme: SchemeKind | str,
    horizon: float,
    noise: Sequence[NoisePath] | NoisePath | None = None,
    *,
    dt: float | None = None,
    n_replicas: int | None = None,
    seed: int = 0,
    d: int = 1,
    init_state: State | None = None,
    init_batch: StateBatch | None = None,
    stride: int = 1,
    workers: int = 1,
    budget_steps: int = DEFAULT_BUDGET_STEPS,
    max_replicas: int = DEFAULT_MAX_REPLICAS,
    deterministic: bool = False,
) -> TrajectorySet:
    """Simulate dQ = P dt, dP = (-grad V - gamma P) dt + sqrt(2 gamma / beta) dW.

    With ``noise`` replica r is driven by channel 0 of ``noise[r]``; dt,
    the replica count, d and the noise fingerprint are taken from the
    paths, and the scheme must be Euler-Maruyama so that the increments
    enter unchanged. Without it W is drawn from the seeded streams and
    ``dt`` and ``n_replicas`` are required.

    Returns a TrajectorySet whose z has m = 0 columns.
    """
    if not gamma > 0:
        raise DomainError(f"gamma must be > 0 (got {gamma})", path="gamma")
    if not beta > 0:
        raise DomainError(f"beta must be > 0 (got {beta})", path="beta")
    scheme = SchemeKind(scheme)

    if isinstance(noise, NoisePath):
        noise = [noise]
    if noise is not None:
        if scheme is not SchemeKind.EULER_MARUYAMA:
            raise ValidationError(
                "explicit noise paths need euler_maruyama", code="unsupported_scheme"
            )
        if not noise:
            raise ValidationError("no noise paths given")
        if dt is not None and not math.isclose(dt, noise[0].dt, rel_tol=1e-12):
            raise ValidationError(
                f"dt={dt:g} differs from the noise step {noise[0].dt:g}", code="dimension_mismatch"
            )
        dt, n_replicas, d, seed = noise[0].dt, len(noise), noise[0].d, noise[0].seed
    elif dt is None or n_replicas is None:
        raise ValidationError("dt and n_replicas are required without noise paths")

    n_steps = n_steps_for(horizon, dt)
    check_budget(n_steps, n_replicas, budget_steps, max_replicas)
    if noise is None:
        noise_id = noise_fingerprint(seed, range(n_replicas), Stream.BROWNIAN, dt, n_steps, 1)
    else:
        noise_id = _check_noise(noise, n_replicas, n_steps, dt, 1, d)

    torus = potential.is_periodic
    stepper = LangevinStep(gamma, beta, potential, dt, scheme, torus)

    def run_block(ids: np.ndarray):
        if init_batch is not None:
            start = init_batch.take(ids)
        elif init_state is not None:
            n = len(ids)
            start = StateBatch(
                np.tile(init_state.q, (n, 1)),
                np.tile(init_state.p, (n, 1)),
                np.zeros((n, 0, d)),
            )
        else:
            start = _langevin_gibbs(potential, beta, d, ids, seed, torus)
        start = StateBatch(start.q, start.p, np.zeros((len(ids), 0, d)))
        return _integrate_block(
            stepper.advance,
            start,
            ids,
            seed,
            n_steps,
            stride,
            1,
            torus,
            0.0 if deterministic else 1.0,
            dt,
            noise,
        )

    q, lift, p, z = _run_blocks(run_block, n_replicas, workers, None)
    times = dt * np.arange(0, n_steps + 1, stride)
    return TrajectorySet(
        times=times,
        q=q,
        p=p,
        z=z,
        q_unwrapped=lift,
        replica_ids=np.arange(n_replicas),
        seed=int(seed),
        dt=float(dt),
        fingerprint=f"langevin:{gamma!r}:{beta!r}:{potential.kind}",
        noise_fingerprint=noise_id,
        metadata={"scheme": scheme.value, "stride": stride, "gamma": gamma},
    )


def _langevin_gibbs(potential, beta, d, ids, seed, torus) -> StateBatch:
    # Extended-system sampler with a dummy mode; q and p are drawn first
    model = GleModel(
        lam=(1.0,),
        alpha=(1.0,),
        beta=beta,
        potential=potential,
        d=d,
        domain_kind="torus" if torus else "confining",
    )
    return initial_states(model, ids, seed, InitKind.GIBBS)


# ============================================================================
# Export
# ============================================================================


def export_trajectories(
    paths: TrajectorySet,
    path: Path,
    meta: dict[str, Any] | None = None,
    stride: int = 1,
) -> Path:
    """Columnar export: t, q0.., p0.., z<j>_<i>.., replica_id; one row per stored time."""
    d, m = paths.d, paths.m
    idx = np.arange(0, paths.times.shape[0], stride)
    R, T = paths.n_replicas, idx.size
    columns: dict[str, np.ndarray] = {"t": np.tile(paths.times[idx], R)}
    for i in range(d):
        columns[f"q{i}"] = paths.q[:, idx, i].reshape(R * T)
    for i in range(d):
        columns[f"p{i}"] = paths.p[:, idx, i].reshape(R * T)
    for j in range(m):
        for i in range(d):
            columns[f"z{j}_{i}"] = paths.z[:, idx, j, i].reshape(R * T)
    columns["replica_id"] = np.repeat(paths.replica_ids, T).astype(float)
    header = {"model_fingerprint": paths.fingerprint, "seed": paths.seed, **(meta or {})}
    return save_series(path, columns, header)
