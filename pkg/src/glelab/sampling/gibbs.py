"""Exact sampling from the Gibbs measure.

The invariant law has density proportional to
exp(-beta (V(q) + |p|**2 / 2 + |z|**2 / 2)): p and every z_j are Gaussian
with covariance I / beta, and q has density proportional to exp(-beta V(q)).
Potentials are separable, so each q coordinate is drawn from the same
one-dimensional marginal.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from ..core.errors import ValidationError
from ..core.logging import get_logger
from ..core.seeding import Stream, rng_for
from ..gle.model import GleModel, StateBatch
from ..gle.potentials import QuadraticPotential

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi
TORUS_GRID = 4096
CONFINING_GRID = 20001
# Truncate the confining support where beta * (v - v_min) exceeds this
TAIL_EXPONENT = 60.0


@dataclass(frozen=True, eq=False)
class PositionMarginal:
    """One-dimensional marginal of q, tabulated for CDF work."""

    grid: np.ndarray
    density: np.ndarray
    cdf_values: np.ndarray
    periodic: bool

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.periodic:
            x = np.mod(x, TWO_PI)
        return np.interp(x, self.grid, self.density, left=0.0, right=0.0)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.periodic:
            # Only meaningful on [0, 2*pi]
            x = np.clip(x, 0.0, TWO_PI)
        return np.interp(x, self.grid, self.cdf_values, left=0.0, right=1.0)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.cdf_values, self.grid)

    def mean(self, g) -> float:
        """Expectation of g(q) for one coordinate by trapezoid quadrature."""
        return float(trapezoid(g(self.grid) * self.density, self.grid))

    @property
    def support(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])


def position_marginal(model: GleModel) -> PositionMarginal:
    """Tabulate the q marginal density exp(-beta v) / Z and its CDF."""
    potential = model.potential
    if model.is_torus:
        grid = np.linspace(0.0, TWO_PI, TORUS_GRID + 1)
    else:
        grid = _confining_grid(model)
    energy = model.beta * potential.profile(grid)
    weight = np.exp(-(energy - energy.min()))
    cdf = cumulative_trapezoid(weight, grid, initial=0.0)
    norm = cdf[-1]
    return PositionMarginal(
        grid=grid,
        density=weight / norm,
        cdf_values=cdf / norm,
        periodic=model.is_torus,
    )


def _confining_grid(model: GleModel) -> np.ndarray:
    v = model.potential.profile
    v_min = float(np.min(v(np.linspace(-10.0, 10.0, 4001))))
    radius = 1.0
    while radius < 1e6:
        edge = model.beta * (np.array([v(-radius), v(radius)]) - v_min)
        if edge.min() > TAIL_EXPONENT:
            break
        radius *= 1.5
    else:
        raise ValidationError(
            f"potential '{model.potential.kind}' does not confine within |q| < 1e6",
            code="not_confining",
        )
    return np.linspace(-radius, radius, CONFINING_GRID)


@dataclass
class GibbsSampler:
    """Draws from the Gibbs measure of one model.

    Strategies for q: ``uniform_rejection`` (torus), ``gaussian`` (quadratic
    confining, any d) and ``inverse_cdf`` (confining, d = 1).
    """

    model: GleModel
    strategy: str = field(init=False)
    proposals: int = field(default=0, init=False)
    accepted: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        model = self.model
        if model.is_torus:
            self.strategy = "uniform_rejection"
            grid = np.linspace(0.0, TWO_PI, TORUS_GRID, endpoint=False)
            self._v_min = float(np.min(model.potential.profile(grid)))
        elif isinstance(model.potential, QuadraticPotential):
            self.strategy = "gaussian"
        elif model.d == 1:
            self.strategy = "inverse_cdf"
            self._marginal = position_marginal(model)
        else:
            raise ValidationError(
                f"no exact Gibbs sampler for confining '{model.potential.kind}' "
                f"potential in d={model.d}; run the dynamics to equilibrium instead",
                code="unsupported_sampler",
            )

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 1.0

    def sample_positions(self, n: int, rng: np.random.Generator) -> np.ndarray:
        d = self.model.d
        if self.strategy == "gaussian":
            stiffness = self.model.potential.stiffness
            return rng.standard_normal((n, d)) / math.sqrt(self.model.beta * stiffness)
        if self.strategy == "inverse_cdf":
            return self._marginal.ppf(rng.random((n, d)))
        return self._rejection(n * d, rng).reshape(n, d)

    def _rejection(self, count: int, rng: np.random.Generator) -> np.ndarray:
        beta = self.model.beta
        profile = self.model.potential.profile
        out = np.empty(count)
        filled = 0
        while filled < count:
            # Batch size depends only on what is left, so draws are history-free
            batch = max(64, 2 * (count - filled))
            x = rng.uniform(0.0, TWO_PI, batch)
            u = rng.random(batch)
            keep = x[u < np.exp(-beta * (profile(x) - self._v_min))]
            self.proposals += batch
            take = min(keep.size, count - filled)
            # Proposals beyond the last needed acceptance still count toward the rate
            self.accepted += keep.size
            out[filled : filled + take] = keep[:take]
            filled += take
        return out

    def sample(self, n: int, rng: np.random.Generator) -> StateBatch:
        model = self.model
        q = self.sample_positions(n, rng)
        scale = 1.0 / math.sqrt(model.beta)
        p = scale * rng.standard_normal((n, model.d))
        z = scale * rng.standard_normal((n, model.m, model.d))
        return StateBatch(q, p, z)


def sample_gibbs(model: GleModel, n: int, seed: int) -> tuple[StateBatch, float]:
    """n independent draws from the Gibbs measure.

    Returns:
        (samples, acceptance rate of the q sampler)

    Raises:
        ValidationError: Confining, non-quadratic potential with d > 1
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1 (got {n})")
    sampler = GibbsSampler(model)
    samples = sampler.sample(n, rng_for(seed, 0, Stream.GIBBS))
    logger.debug(
        f"Drew {n} Gibbs samples ({sampler.strategy}, "
        f"acceptance={sampler.acceptance_rate:.3f})"
    )
    return samples, sampler.acceptance_rate
