"""Grid checks that a confining potential is admissible for ergodicity.

Three conditions are checked along rays of increasing radius:

- ``drift_growth``: <grad V, q> >= sigma V + b |q|**2 for fitted sigma, b > 0
- ``hessian_bound``: the Frobenius norm of the Hessian stays bounded
- ``poincare_growth``: |grad V|**2 / 2 - Laplacian V grows along the radii
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from ..core.errors import ValidationError
from ..core.logging import get_logger
from .potentials import Potential

logger = get_logger(__name__)

DEFAULT_RADII = np.geomspace(0.05, 50.0, 60)
FIT_GRID = np.geomspace(1e-3, 4.0, 28)


@dataclass
class ConditionVerdict:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class AdmissibilityReport:
    conditions: list[ConditionVerdict] = field(default_factory=list)
    sigma: float = 0.0
    b: float = 0.0
    hessian_max: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def condition(self, name: str) -> ConditionVerdict:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def _directions(d: int, n_directions: int) -> np.ndarray:
    """Unit directions: the +/- axes plus deterministic Gaussian directions."""
    axes = np.concatenate([np.eye(d), -np.eye(d)])
    if d == 1:
        return axes
    rng = np.random.default_rng(0)
    extra = rng.standard_normal((n_directions, d))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    return np.concatenate([axes, extra])


def confining_admissibility(
    potential: Potential,
    radii: np.ndarray | None = None,
    d: int = 1,
    n_directions: int = 16,
) -> AdmissibilityReport:
    """Evaluate the admissibility conditions on a radial sample grid.

    Args:
        potential: A non-periodic potential
        radii: Increasing radii (default: 60 geometric radii in [0.05, 50])
        d: Spatial dimension
        n_directions: Extra random directions for d > 1

    Raises:
        ValidationError: If the potential is periodic
    """
    if potential.is_periodic:
        raise ValidationError(
            f"potential '{potential.kind}' is periodic: not confining, "
            "admissibility applies to the confining case only",
            code="not_confining",
        )
    radii = np.sort(np.asarray(DEFAULT_RADII if radii is None else radii, dtype=float))
    if radii.size < 4:
        raise ValidationError("admissibility grid needs at least 4 radii")

    dirs = _directions(d, n_directions)
    # points[i, k] = radii[i] * dirs[k]
    points = radii[:, None, None] * dirs[None, :, :]
    r2 = radii[:, None] ** 2 * np.ones(dirs.shape[0])

    V = potential.value(points)
    grad = potential.grad(points)
    lap = potential.laplacian(points)
    radial = np.sum(grad * points, axis=-1)

    # Fit (sigma, b) on a grid: feasible pairs keep the margin >= 0 everywhere,
    # the most balanced feasible pair (largest min(sigma, b)) is kept.
    scale = max(1.0, float(np.max(np.abs(radial))))
    best = None
    for sigma in FIT_GRID:
        for b in FIT_GRID:
            margin = float(np.min(radial - sigma * V - b * r2))
            feasible = margin >= -1e-12 * scale
            key = (feasible, min(sigma, b) if feasible else margin)
            if best is None or key > best[0]:
                best = (key, sigma, b, margin)
    (feasible, _), sigma, b, margin = best
    drift = ConditionVerdict(
        name="drift_growth",
        passed=bool(feasible),
        value=margin,
        detail=f"min <grad V, q> - sigma V - b|q|^2 with sigma={sigma:.4g}, b={b:.4g}",
    )

    hess = potential.hessian_norm(points).max(axis=1)
    split = max(1, (2 * radii.size) // 3)
    inner, outer = float(hess[:split].max()), float(hess[split:].max())
    bounded = outer <= 1.01 * inner + 1e-12
    hessian = ConditionVerdict(
        name="hessian_bound",
        passed=bool(bounded),
        value=float(hess.max()),
        detail=f"max ||Hess V|| inner={inner:.4g}, outer={outer:.4g}",
    )

    w = (0.5 * np.sum(grad**2, axis=-1) - lap).min(axis=1)
    tail = w[radii.size // 2 :]
    growing = bool(np.all(np.diff(tail) >= -1e-12 * np.abs(tail[1:]).max()) and w[-1] > w[0])
    poincare = ConditionVerdict(
        name="poincare_growth",
        passed=growing,
        value=float(w[-1]),
        detail="per-radius min of |grad V|^2/2 - Laplacian V",
    )

    report = AdmissibilityReport(
        conditions=[drift, hessian, poincare],
        sigma=float(sigma),
        b=float(b),
        hessian_max=float(hess.max()),
    )
    logger.debug(
        f"Admissibility of {potential.kind}: "
        + ", ".join(f"{c.name}={'PASS' if c.passed else 'FAIL'}" for c in report.conditions)
    )
    return report
