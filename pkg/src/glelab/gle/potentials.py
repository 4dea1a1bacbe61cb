"""Potential registry.

Every potential is separable, V(q) = sum_i v(q_i), so the scalar profile
v and its first two derivatives define value, gradient, Hessian and
Laplacian for any dimension. Positions are arrays of shape (..., d).

Kinds register themselves by name, mirroring how run configs refer to them:

    potential = build_potential(PotentialConfig(kind="cosine", params={"amplitude": 1.0}))
"""

import math
from abc import ABC, abstractmethod
from typing import Any

import numpy as np
import sympy
from numpy.polynomial import Polynomial
from scipy.interpolate import CubicSpline

from ..core.errors import ConfigError, DomainError
from ..core.logging import get_logger
from ..core.models import PotentialConfig

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi


class Potential(ABC):
    """Separable potential V(q) = sum_i v(q_i)."""

    kind: str = ""
    is_periodic: bool = False

    @abstractmethod
    def profile(self, x: np.ndarray) -> np.ndarray:
        """Scalar profile v(x), elementwise."""

    @abstractmethod
    def profile_grad(self, x: np.ndarray) -> np.ndarray:
        """v'(x), elementwise."""

    @abstractmethod
    def profile_curv(self, x: np.ndarray) -> np.ndarray:
        """v''(x), elementwise."""

    @abstractmethod
    def params(self) -> dict[str, Any]:
        """Parameters that reproduce this potential through the registry."""

    def sympy_profile(self, x: sympy.Symbol) -> sympy.Expr:
        """Symbolic profile, for analytic kinds."""
        raise NotImplementedError(f"Potential '{self.kind}' has no symbolic form")

    # ------------------------------------------------------------------
    # Vector interface
    # ------------------------------------------------------------------

    def value(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return self.profile(q).sum(axis=-1)

    def grad(self, q: np.ndarray) -> np.ndarray:
        return self.profile_grad(np.asarray(q, dtype=float))

    def hessian(self, q: np.ndarray) -> np.ndarray:
        curv = self.profile_curv(np.asarray(q, dtype=float))
        eye = np.eye(curv.shape[-1])
        return curv[..., :, None] * eye

    def laplacian(self, q: np.ndarray) -> np.ndarray:
        return self.profile_curv(np.asarray(q, dtype=float)).sum(axis=-1)

    def hessian_norm(self, q: np.ndarray) -> np.ndarray:
        """Frobenius norm of the (diagonal) Hessian."""
        curv = self.profile_curv(np.asarray(q, dtype=float))
        return np.sqrt((curv**2).sum(axis=-1))

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "params": self.params()}

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.params()})"


class CosinePotential(Potential):
    """v(x) = amplitude * cos(x) + offset, 2*pi periodic."""

    kind = "cosine"
    is_periodic = True

    def __init__(self, amplitude: float = 1.0, offset: float = 0.0):
        self.amplitude = float(amplitude)
        self.offset = float(offset)

    def profile(self, x):
        # Reduce to [0, 2*pi) so that x and x + 2*pi evaluate the same argument
        return self.amplitude * np.cos(np.mod(x, TWO_PI)) + self.offset

    def profile_grad(self, x):
        return -self.amplitude * np.sin(np.mod(x, TWO_PI))

    def profile_curv(self, x):
        return -self.amplitude * np.cos(np.mod(x, TWO_PI))

    def params(self):
        return {"amplitude": self.amplitude, "offset": self.offset}

    def sympy_profile(self, x):
        return sympy.Float(self.amplitude) * sympy.cos(x) + sympy.Float(self.offset)


class QuadraticPotential(Potential):
    """v(x) = stiffness * x**2 / 2."""

    kind = "quadratic"

    def __init__(self, stiffness: float = 1.0):
        if not stiffness > 0:
            raise DomainError(
                f"stiffness must be > 0 (got {stiffness})", path="potential.params.stiffness"
            )
        self.stiffness = float(stiffness)

    def profile(self, x):
        return 0.5 * self.stiffness * x**2

    def profile_grad(self, x):
        return self.stiffness * x

    def profile_curv(self, x):
        return np.full_like(x, self.stiffness, dtype=float)

    def params(self):
        return {"stiffness": self.stiffness}

    def sympy_profile(self, x):
        return sympy.Rational(1, 2) * sympy.Float(self.stiffness) * x**2


class PolynomialPotential(Potential):
    """v(x) = sum_k c_k x**k."""

    kind = "polynomial"

    def __init__(self, coefficients: list[float]):
        if not coefficients:
            raise DomainError(
                "polynomial potential needs at least one coefficient",
                path="potential.params.coefficients",
            )
        self.coefficients = [float(c) for c in coefficients]
        self._poly = Polynomial(self.coefficients)
        self._d1 = self._poly.deriv(1)
        self._d2 = self._poly.deriv(2)

    def profile(self, x):
        return self._poly(x)

    def profile_grad(self, x):
        return self._d1(x)

    def profile_curv(self, x):
        return self._d2(x) + np.zeros_like(x, dtype=float)

    def params(self):
        return {"coefficients": list(self.coefficients)}

    def sympy_profile(self, x):
        return sum(sympy.Float(c) * x**k for k, c in enumerate(self.coefficients))


class TabulatedPotential(Potential):
    """Cubic-spline interpolant of tabulated values.

    Periodic tables must span exactly one period [0, 2*pi] with matching
    end values; the spline then uses periodic boundary conditions.
    """

    kind = "tabulated"

    def __init__(self, grid: list[float], values: list[float], periodic: bool = False):
        x = np.asarray(grid, dtype=float)
        y = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 4:
            raise DomainError(
                "tabulated potential needs matching 1d grid/values with >= 4 points",
                path="potential.params.grid",
            )
        if np.any(np.diff(x) <= 0):
            raise DomainError(
                "tabulated grid must be strictly increasing", path="potential.params.grid"
            )
        self.is_periodic = bool(periodic)
        if self.is_periodic:
            if not (math.isclose(x[0], 0.0, abs_tol=1e-12) and math.isclose(x[-1], TWO_PI)):
                raise DomainError(
                    "periodic tabulated grid must span [0, 2*pi]",
                    path="potential.params.grid",
                )
            if not math.isclose(y[0], y[-1], rel_tol=1e-12, abs_tol=1e-12):
                raise DomainError(
                    "periodic tabulated values must match at both ends",
                    path="potential.params.values",
                )
            y = y.copy()
            y[-1] = y[0]
            self._spline = CubicSpline(x, y, bc_type="periodic")
        else:
            self._spline = CubicSpline(x, y, bc_type="natural", extrapolate=True)
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)
        self.grid = x.tolist()
        self.values = y.tolist()

    def _arg(self, x):
        return np.mod(x, TWO_PI) if self.is_periodic else x

    def profile(self, x):
        return self._spline(self._arg(x))

    def profile_grad(self, x):
        return self._d1(self._arg(x))

    def profile_curv(self, x):
        return self._d2(self._arg(x))

    def params(self):
        return {"grid": self.grid, "values": self.values, "periodic": self.is_periodic}


# ============================================================================
# Registry
# ============================================================================

POTENTIAL_REGISTRY: dict[str, type[Potential]] = {}


def register_potential(name: str, potential_class: type[Potential]) -> None:
    """Register a potential kind under a config name."""
    if not name or not name.replace("_", "").isalnum():
        raise ConfigError(f"Potential name '{name}' must be alphanumeric/underscores")
    if name in POTENTIAL_REGISTRY:
        logger.warning(
            f"Potential '{name}' already registered. Overwriting with {potential_class.__name__}"
        )
    POTENTIAL_REGISTRY[name] = potential_class


def list_potentials() -> list[str]:
    return sorted([*POTENTIAL_REGISTRY, "zero"])


def build_potential(config: PotentialConfig | dict[str, Any]) -> Potential:
    """Instantiate a potential from its config block.

    ``zero`` is the cosine kind with amplitude 0 (V identically 0 on the torus).

    Raises:
        ConfigError: Unknown kind or bad parameters
    """
    if isinstance(config, dict):
        config = PotentialConfig(**config)

    if config.kind == "zero":
        return CosinePotential(amplitude=0.0)

    potential_class = POTENTIAL_REGISTRY.get(config.kind)
    if potential_class is None:
        raise ConfigError(
            f"Unknown potential kind '{config.kind}'. Available: {', '.join(list_potentials())}",
            details={"path": "model.potential.kind"},
        )
    try:
        return potential_class(**config.params)
    except TypeError as e:
        raise ConfigError(
            f"Invalid parameters for potential '{config.kind}': {e}",
            details={"path": "model.potential.params"},
        ) from e


def gradient_mismatch(
    potential: Potential, points: np.ndarray, step: float = 1e-5
) -> float:
    """Largest relative gap between central differences of V and grad V."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grad = potential.grad(points)
    worst = 0.0
    for i in range(points.shape[-1]):
        shift = np.zeros(points.shape[-1])
        shift[i] = step
        fd = (potential.value(points + shift) - potential.value(points - shift)) / (2 * step)
        rel = np.abs(fd - grad[..., i]) / np.maximum(1.0, np.abs(grad[..., i]))
        worst = max(worst, float(rel.max()))
    return worst


register_potential("cosine", CosinePotential)
register_potential("quadratic", QuadraticPotential)
register_potential("polynomial", PolynomialPotential)
register_potential("tabulated", TabulatedPotential)
