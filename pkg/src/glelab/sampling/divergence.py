"""Histogram estimators of the distance from a sample to the Gibbs measure.

Estimates run on low-dimensional marginals such as (q0,), (p0,) or (q0, p0).
Reference cell masses are exact: Gaussian CDFs for p and z, the tabulated
position CDF for q. Samples that fall outside the binned box are pooled into
one extra "outside" cell on both sides of every sum.
"""

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ..core.errors import EstimationError, ValidationError
from ..core.logging import get_logger
from ..core.models import EstimateWithCI
from ..core.seeding import Stream, rng_for
from ..gle.model import GleModel, StateBatch
from .gibbs import PositionMarginal, position_marginal

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_BINS = 64
DEFAULT_BOOTSTRAP = 200
# Cells need this many samples to enter a finite-difference gradient
FISHER_MIN_COUNT = 20
# Below this the reference mass is treated as zero
MASS_FLOOR = 1e-300

_COORD = re.compile(r"^(q|p)(\d+)$|^z(\d+)_(\d+)$")


@dataclass(frozen=True)
class Binning:
    """Coordinates of a marginal and its histogram grid.

    Coordinates are named ``q<i>``, ``p<i>`` and ``z<j>_<i>`` (mode j,
    spatial index i). Missing ranges default to [0, 2 pi] for torus q, to
    six standard deviations for p and z, and to the tabulated support for
    confining q.
    """

    coords: tuple[str, ...] = ("q0",)
    bins: int | tuple[int, ...] = DEFAULT_BINS
    ranges: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if not self.coords:
            raise ValidationError("binning needs at least one coordinate")
        for name in self.coords:
            if not _COORD.match(name):
                raise ValidationError(
                    f"unknown coordinate '{name}' (expected q<i>, p<i> or z<j>_<i>)",
                    code="invalid_binning",
                )
        counts = self.bin_counts
        if len(counts) != len(self.coords) or min(counts) < 2:
            raise ValidationError(f"invalid bin counts {self.bins}", code="invalid_binning")
        if self.ranges is not None and len(self.ranges) != len(self.coords):
            raise ValidationError("one range per coordinate is required", code="invalid_binning")

    @property
    def bin_counts(self) -> tuple[int, ...]:
        if isinstance(self.bins, int):
            return (self.bins,) * len(self.coords)
        return tuple(int(b) for b in self.bins)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.bin_counts))

    def resolved_ranges(self, model: GleModel, marginal: PositionMarginal | None) -> list[tuple[float, float]]:
        if self.ranges is not None:
            return [tuple(map(float, r)) for r in self.ranges]
        out = []
        width = 6.0 / math.sqrt(model.beta)
        for name in self.coords:
            if name.startswith("q"):
                out.append((0.0, TWO_PI) if model.is_torus else marginal.support)
            else:
                out.append((-width, width))
        return out


def _column(samples: StateBatch, name: str, model: GleModel) -> np.ndarray:
    match = _COORD.match(name)
    if match.group(1):
        i = int(match.group(2))
        if i >= model.d:
            raise ValidationError(f"coordinate '{name}' exceeds d={model.d}", code="invalid_binning")
        values = samples.q[:, i] if match.group(1) == "q" else samples.p[:, i]
        if match.group(1) == "q" and model.is_torus:
            values = np.mod(values, TWO_PI)
        return values
    j, i = int(match.group(3)), int(match.group(4))
    if j >= model.m or i >= model.d:
        raise ValidationError(f"coordinate '{name}' exceeds m={model.m}, d={model.d}", code="invalid_binning")
    return samples.z[:, j, i]


@dataclass(eq=False)
class BinnedMarginal:
    """Sample counts and exact reference masses on one grid."""

    counts: np.ndarray
    reference: np.ndarray
    outside_count: int
    outside_reference: float
    widths: tuple[float, ...]
    periodic: tuple[bool, ...]
    n: int = field(init=False)

    def __post_init__(self) -> None:
        self.n = int(self.counts.sum()) + self.outside_count

    @property
    def occupied(self) -> int:
        return int(np.count_nonzero(self.counts)) + int(self.outside_count > 0)


def bin_samples(samples: StateBatch, model: GleModel, binning: Binning) -> BinnedMarginal:
    """Histogram the marginal and compute the reference cell masses.

    Raises:
        EstimationError: Too few samples, or over half the sample mass
            outside the binned region
    """
    n = len(samples)
    if n < 10 * binning.n_cells:
        raise EstimationError(
            f"need at least 10 samples per cell ({n} samples for {binning.n_cells} cells)",
            code="too_few_samples",
        )
    needs_q = any(c.startswith("q") for c in binning.coords)
    marginal = position_marginal(model) if needs_q else None
    ranges = binning.resolved_ranges(model, marginal)
    columns = np.column_stack([_column(samples, c, model) for c in binning.coords])
    counts, edges = np.histogramdd(columns, bins=binning.bin_counts, range=ranges)
    counts = counts.astype(np.int64)
    outside = n - int(counts.sum())
    if outside > 0.5 * n:
        raise EstimationError(
            f"{outside / n:.1%} of the sample mass falls outside the binned region",
            code="uncovered_mass",
            details={"ranges": ranges},
        )

    scale = 1.0 / math.sqrt(model.beta)
    reference = np.ones(())
    for name, e in zip(binning.coords, edges):
        if name.startswith("q"):
            cdf = marginal.cdf(e)
        else:
            cdf = norm.cdf(e, scale=scale)
        reference = np.multiply.outer(reference, np.diff(cdf))
    reference = np.asarray(reference).reshape(counts.shape)
    outside_reference = max(0.0, 1.0 - float(reference.sum()))

    return BinnedMarginal(
        counts=counts,
        reference=reference,
        outside_count=outside,
        outside_reference=outside_reference,
        widths=tuple(float(e[1] - e[0]) for e in edges),
        periodic=tuple(c.startswith("q") and model.is_torus for c in binning.coords),
    )


# ============================================================================
# Plug-in functionals
# ============================================================================


def _kl(counts: np.ndarray, outside: int, binned: BinnedMarginal, n: int) -> float:
    f = counts / n
    mask = counts > 0
    ref = np.maximum(binned.reference[mask], MASS_FLOOR)
    h = float(np.sum(f[mask] * np.log(f[mask] / ref)))
    if outside > 0:
        h += (outside / n) * math.log((outside / n) / max(binned.outside_reference, MASS_FLOOR))
    occupied = int(np.count_nonzero(counts)) + int(outside > 0)
    # Miller-Madow correction
    return h - (occupied - 1) / (2.0 * n)


def _l1(counts: np.ndarray, outside: int, binned: BinnedMarginal, n: int) -> float:
    return float(np.abs(counts / n - binned.reference).sum() + abs(outside / n - binned.outside_reference))


def _fisher(counts: np.ndarray, binned: BinnedMarginal, n: int, min_count: int) -> float:
    f = counts / n
    usable = counts >= min_count
    with np.errstate(divide="ignore", invalid="ignore"):
        log_h = np.where(usable, np.log(f) - np.log(np.maximum(binned.reference, MASS_FLOOR)), np.nan)
    total = 0.0
    for axis, (dx, periodic) in enumerate(zip(binned.widths, binned.periodic)):
        if periodic:
            plus, minus = np.roll(log_h, -1, axis), np.roll(log_h, 1, axis)
            n_plus, n_minus = np.roll(counts, -1, axis), np.roll(counts, 1, axis)
        else:
            pad = [(0, 0)] * log_h.ndim
            pad[axis] = (1, 1)
            padded = np.pad(log_h, pad, constant_values=np.nan)
            padded_n = np.pad(counts, pad, constant_values=0)
            sl = lambda a, b: tuple(  # noqa: E731
                slice(a, b) if k == axis else slice(None) for k in range(log_h.ndim)
            )
            plus, minus = padded[sl(2, None)], padded[sl(None, -2)]
            n_plus, n_minus = padded_n[sl(2, None)], padded_n[sl(None, -2)]
        ok = usable & np.isfinite(plus) & np.isfinite(minus)
        with np.errstate(divide="ignore", invalid="ignore"):
            grad = (plus - minus) / (2.0 * dx)
            # Variance of the log-count difference inflates the squared gradient
            noise = (1.0 / n_plus + 1.0 / n_minus) / (2.0 * dx) ** 2
            term = np.where(ok, f * (grad**2 - noise), 0.0)
        total += float(np.sum(term))
    return total


def _bootstrap(binned: BinnedMarginal, statistic, n_boot: int, seed: int) -> np.ndarray:
    rng = rng_for(seed, 0, Stream.BOOTSTRAP)
    probs = np.append(binned.counts.ravel(), binned.outside_count) / binned.n
    draws = rng.multinomial(binned.n, probs, size=n_boot)
    shape = binned.counts.shape
    return np.array([statistic(row[:-1].reshape(shape), int(row[-1])) for row in draws])


def _with_ci(value: float, boots: np.ndarray, method: str, n: int) -> EstimateWithCI:
    est = EstimateWithCI.from_bootstrap(value, boots, method, n)
    return EstimateWithCI(
        value=max(0.0, est.value), lo=max(0.0, est.lo), hi=max(0.0, est.hi), method=method, n=n
    )


def estimate_relative_entropy(
    samples: StateBatch,
    model: GleModel,
    binning: Binning | None = None,
    seed: int = 0,
    n_boot: int = DEFAULT_BOOTSTRAP,
    binned: BinnedMarginal | None = None,
) -> EstimateWithCI:
    """Binned H(f | rho) = sum f log(f / rho) with a bootstrap 95% interval, clamped at 0."""
    binned = binned or bin_samples(samples, model, binning or Binning())
    n = binned.n
    value = _kl(binned.counts, binned.outside_count, binned, n)
    boots = _bootstrap(binned, lambda c, o: _kl(c, o, binned, n), n_boot, seed)
    return _with_ci(value, boots, "binned_kl_miller_madow", n)


def estimate_fisher(
    samples: StateBatch,
    model: GleModel,
    binning: Binning | None = None,
    seed: int = 0,
    n_boot: int = DEFAULT_BOOTSTRAP,
    min_count: int = FISHER_MIN_COUNT,
    binned: BinnedMarginal | None = None,
) -> EstimateWithCI:
    """Binned I(f | rho) = sum f |grad log(f / rho)|^2 by central differences."""
    binned = binned or bin_samples(samples, model, binning or Binning())
    n = binned.n
    value = _fisher(binned.counts, binned, n, min_count)
    boots = _bootstrap(binned, lambda c, o: _fisher(c, binned, n, min_count), n_boot, seed)
    return _with_ci(value, boots, "binned_fisher", n)


def estimate_l1(samples: StateBatch, model: GleModel, binning: Binning | None = None) -> float:
    binned = bin_samples(samples, model, binning or Binning())
    return _l1(binned.counts, binned.outside_count, binned, binned.n)


@dataclass
class DivergenceReport:
    entropy: EstimateWithCI
    fisher: EstimateWithCI
    l1: float
    pinsker_slack: float
    pinsker_ok: bool

    def to_dict(self) -> dict:
        return {
            "entropy": self.entropy.model_dump(),
            "fisher": self.fisher.model_dump(),
            "l1": self.l1,
            "pinsker_slack": self.pinsker_slack,
            "pinsker_ok": self.pinsker_ok,
        }


def divergence_report(
    samples: StateBatch,
    model: GleModel,
    binning: Binning | None = None,
    seed: int = 0,
    n_boot: int = DEFAULT_BOOTSTRAP,
) -> DivergenceReport:
    """Entropy, Fisher information and L1 on one grid, with the Pinsker check.

    The check is 0.5 * L1^2 <= H_hi + occupied / (2 n); the slack term covers
    the upward bias of the binned L1.
    """
    binned = bin_samples(samples, model, binning or Binning())
    entropy = estimate_relative_entropy(samples, model, seed=seed, n_boot=n_boot, binned=binned)
    fisher = estimate_fisher(samples, model, seed=seed, n_boot=n_boot, binned=binned)
    l1 = _l1(binned.counts, binned.outside_count, binned, binned.n)
    slack = binned.occupied / (2.0 * binned.n)
    pinsker_ok = 0.5 * l1**2 <= entropy.hi + slack
    if not pinsker_ok:
        logger.warning(
            f"Pinsker check failed: 0.5*L1^2={0.5 * l1**2:.4g} > H_hi+slack={entropy.hi + slack:.4g}"
        )
    return DivergenceReport(entropy, fisher, l1, slack, pinsker_ok)
