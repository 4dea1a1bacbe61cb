"""Tensor basis for L^2 of the Gibbs measure (d = 1).

The basis is psi_i(q) h_a(p) h_b1(z_1) ... h_bm(z_m):

- h_n(x) = He_n(sqrt(beta) x) / sqrt(n!) are the normalized probabilists'
  Hermite functions, orthonormal under N(0, 1/beta).
- psi_i are orthonormal under exp(-beta V) dq / Z, obtained from raw
  functions by Cholesky of their Gram matrix. Raw functions are
  {1, cos kq, sin kq} on the torus and Hermite polynomials scaled to the
  position spread for confining potentials. psi_0 is the constant 1.

All one-factor matrices are taken in these orthonormal bases.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.integrate import trapezoid

from ..core.errors import BudgetError, ValidationError
from ..core.logging import get_logger
from ..gle.model import GleModel
from ..sampling.gibbs import position_marginal

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi
MAX_MODES = 2


# ============================================================================
# Hermite factor
# ============================================================================


def hermite_values(x: np.ndarray, n_max: int, beta: float) -> np.ndarray:
    """h_0..h_{n_max} at x, shape (len(x), n_max + 1), by the normalized recurrence."""
    y = math.sqrt(beta) * np.asarray(x, dtype=float)
    out = np.empty(y.shape + (n_max + 1,))
    out[..., 0] = 1.0
    if n_max >= 1:
        out[..., 1] = y
    for n in range(1, n_max):
        out[..., n + 1] = (y * out[..., n] - math.sqrt(n) * out[..., n - 1]) / math.sqrt(n + 1)
    return out


def hermite_position(n_max: int, beta: float) -> np.ndarray:
    """Matrix of multiplication by x: <h_i, x h_j>."""
    off = np.sqrt(np.arange(1, n_max + 1) / beta)
    return np.diag(off, 1) + np.diag(off, -1)


def hermite_derivative(n_max: int, beta: float) -> np.ndarray:
    """Matrix of d/dx: <h_i, h_j'>, with h_n' = sqrt(beta n) h_{n-1}."""
    return np.diag(np.sqrt(beta * np.arange(1, n_max + 1)), 1)


def hermite_number(n_max: int) -> np.ndarray:
    """Matrix of x d/dx - (1/beta) d^2/dx^2, diagonal with entries n."""
    return np.diag(np.arange(n_max + 1, dtype=float))


# ============================================================================
# Position factor
# ============================================================================


@dataclass(frozen=True, eq=False)
class PositionBasis:
    """Orthonormal functions of q under the position marginal.

    ``transform`` maps raw functions to psi: psi = raw @ transform.
    ``derivative`` is <psi_i, psi_j'> and ``force`` is <psi_i, V' psi_j>.
    """

    n_q: int
    periodic: bool
    scale: float
    transform: np.ndarray
    derivative: np.ndarray
    force: np.ndarray
    frequency: np.ndarray
    quadrature_error: float

    @property
    def size(self) -> int:
        return 2 * self.n_q + 1

    def raw(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Raw function values and derivatives at q, each (len(q), size)."""
        q = np.asarray(q, dtype=float)
        if self.periodic:
            k = np.arange(1, self.n_q + 1)
            kq = np.multiply.outer(q, k)
            values = np.empty(q.shape + (self.size,))
            derivs = np.zeros_like(values)
            values[..., 0] = 1.0
            values[..., 1::2] = np.cos(kq)
            values[..., 2::2] = np.sin(kq)
            derivs[..., 1::2] = -k * np.sin(kq)
            derivs[..., 2::2] = k * np.cos(kq)
            return values, derivs
        h = hermite_values(q / self.scale, self.size - 1, 1.0)
        derivs = np.zeros_like(h)
        n = np.arange(1, self.size)
        derivs[..., 1:] = np.sqrt(n) * h[..., :-1] / self.scale
        return h, derivs

    def values(self, q: np.ndarray) -> np.ndarray:
        return self.raw(q)[0] @ self.transform


def build_position_basis(model: GleModel, n_q: int, quadrature_points: int = 512) -> PositionBasis:
    """Orthonormalize the raw q functions in L^2(exp(-beta V) dq / Z).

    Raises:
        ValidationError: Too few quadrature points for mode 2 n_q, or a
            non-integrable weight
    """
    if model.is_torus:
        if quadrature_points < 4 * n_q + 2:
            raise ValidationError(
                f"quadrature_points={quadrature_points} cannot resolve mode {2 * n_q}",
                code="under_resolved",
            )
        grid = np.linspace(0.0, TWO_PI, quadrature_points, endpoint=False)
        energy = model.beta * model.potential.profile(grid)
        weights = np.exp(-(energy - energy.min()))
        weights /= weights.sum()
        scale = 1.0
    else:
        marginal = position_marginal(model)
        grid = marginal.grid
        weights = marginal.density * np.gradient(grid)
        weights /= weights.sum()
        mean = marginal.mean(lambda x: x)
        scale = math.sqrt(marginal.mean(lambda x: (x - mean) ** 2))

    if not np.all(np.isfinite(weights)):
        raise ValidationError(
            f"potential '{model.potential.kind}' gives a non-integrable weight",
            code="non_integrable_potential",
        )

    basis = PositionBasis(
        n_q=n_q,
        periodic=model.is_torus,
        scale=scale,
        transform=np.eye(2 * n_q + 1),
        derivative=np.zeros((0, 0)),
        force=np.zeros((0, 0)),
        frequency=np.zeros(0),
        quadrature_error=0.0,
    )
    raw, draw = basis.raw(grid)
    gram = raw.T @ (weights[:, None] * raw)
    chol = scipy.linalg.cholesky(gram, lower=True)
    transform = scipy.linalg.solve_triangular(chol, np.eye(len(gram)), lower=True).T
    psi = raw @ transform
    dpsi = draw @ transform
    derivative = psi.T @ (weights[:, None] * dpsi)
    # <psi_i, V' psi_j> by integration by parts
    force = (derivative + derivative.T) / model.beta
    error = float(np.max(np.abs(psi.T @ (weights[:, None] * psi) - np.eye(len(gram)))))

    if model.is_torus:
        frequency = (np.arange(2 * n_q + 1) + 1) // 2
    else:
        frequency = np.arange(2 * n_q + 1)
    return PositionBasis(
        n_q=n_q,
        periodic=model.is_torus,
        scale=scale,
        transform=transform,
        derivative=derivative,
        force=force,
        frequency=frequency,
        quadrature_error=error,
    )


# ============================================================================
# Tensor basis
# ============================================================================


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Truncated tensor basis; index order is q, p, z_1, ..., z_m (row major)."""

    n_q: int
    n_p: int
    n_z: int
    beta: float
    m: int
    position: PositionBasis
    fingerprint: str = field(init=False)

    def __post_init__(self) -> None:
        blob = json.dumps(self.descriptor(), sort_keys=True)
        object.__setattr__(self, "fingerprint", hashlib.sha256(blob.encode()).hexdigest()[:16])

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.n_q + 1, self.n_p + 1) + (self.n_z + 1,) * self.m

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    def descriptor(self) -> dict:
        return {
            "n_q": self.n_q,
            "n_p": self.n_p,
            "n_z": self.n_z,
            "beta": self.beta,
            "m": self.m,
            "periodic": self.position.periodic,
        }

    def index(self, k: int, n_p: int, *n_z: int) -> int:
        """Flat index of (q function k, Hermite n_p, Hermite n_z...)."""
        return int(np.ravel_multi_index((k, n_p) + tuple(n_z), self.shape))

    def degrees(self) -> tuple[np.ndarray, ...]:
        """Per-factor degree labels of every flat index (frequency for q)."""
        grids = np.meshgrid(*[np.arange(s) for s in self.shape], indexing="ij")
        labels = [self.position.frequency[grids[0]]] + list(grids[1:])
        return tuple(g.ravel() for g in labels)

    def top_degrees(self) -> list[int]:
        return [int(self.position.frequency.max()), self.n_p] + [self.n_z] * self.m

    def outer_shell(self) -> np.ndarray:
        """Mask of basis functions carrying the top degree of any factor."""
        degrees = self.degrees()
        tops = self.top_degrees()
        mask = np.zeros(self.dim, dtype=bool)
        for deg, top in zip(degrees, tops):
            if top > 0:
                mask |= deg == top
        return mask

    def constant(self) -> np.ndarray:
        u = np.zeros(self.dim)
        u[0] = 1.0
        return u

    def momentum(self) -> np.ndarray:
        """Coefficients of f(q, p, z) = p, i.e. h_1(p) / sqrt(beta)."""
        u = np.zeros(self.dim)
        u[self.index(0, 1, *([0] * self.m))] = 1.0 / math.sqrt(self.beta)
        return u

    def momentum_squared(self) -> np.ndarray:
        """Coefficients of f = p^2, i.e. (sqrt(2) h_2(p) + 1) / beta."""
        u = np.zeros(self.dim)
        u[0] = 1.0 / self.beta
        u[self.index(0, 2, *([0] * self.m))] = math.sqrt(2.0) / self.beta
        return u


def build_basis(
    model: GleModel,
    n_q: int,
    n_p: int,
    n_z: int,
    quadrature_points: int = 512,
    max_dim: int = 20_000,
) -> SpectralBasis:
    """Build the tensor basis for a d = 1 model with m <= 2.

    Raises:
        ValidationError: d != 1 or m > 2
        BudgetError: Dimension above max_dim
    """
    if model.d != 1 or model.m > MAX_MODES:
        raise ValidationError(
            f"spectral work needs d = 1 and m <= {MAX_MODES} (got d={model.d}, m={model.m})",
            code="unsupported_model",
        )
    if min(n_q, n_p, n_z) < 1:
        raise ValidationError("basis orders must be >= 1")
    dim = (2 * n_q + 1) * (n_p + 1) * (n_z + 1) ** model.m
    if dim > max_dim:
        raise BudgetError(
            f"Spectral dimension {dim:,} exceeds budget {max_dim:,}",
            details={"dim": dim, "budget": max_dim},
        )
    position = build_position_basis(model, n_q, quadrature_points)
    basis = SpectralBasis(n_q=n_q, n_p=n_p, n_z=n_z, beta=model.beta, m=model.m, position=position)
    logger.debug(f"Built spectral basis {basis.shape} (dim={dim}, q-quadrature error={position.quadrature_error:.2e})")
    return basis


def check_orthonormality(model: GleModel, basis: SpectralBasis, refine: int = 4) -> float:
    """Max deviation of the q Gram matrix from I on a refined quadrature.

    Hermite factors are orthonormal analytically.
    """
    pos = basis.position
    if pos.periodic:
        grid = np.linspace(0.0, TWO_PI, refine * 512, endpoint=False)
        energy = model.beta * model.potential.profile(grid)
        w = np.exp(-(energy - energy.min()))
        w /= w.sum()
        psi = pos.values(grid)
        gram = psi.T @ (w[:, None] * psi)
    else:
        marginal = position_marginal(model)
        grid = np.linspace(*marginal.support, refine * len(marginal.grid))
        density = marginal.pdf(grid)
        psi = pos.values(grid)
        gram = trapezoid(psi[:, :, None] * psi[:, None, :] * density[:, None, None], grid, axis=0)
        gram /= trapezoid(density, grid)
    return float(np.max(np.abs(gram - np.eye(len(gram)))))


def evaluate_expansion(
    basis: SpectralBasis, coeffs: np.ndarray, q: np.ndarray, p: np.ndarray, z: np.ndarray
) -> np.ndarray:
    """Evaluate sum_c coeffs_c e_c at points; q, p of shape (n,), z of shape (n, m)."""
    q = np.ravel(q)
    p = np.ravel(p)
    z = np.asarray(z, dtype=float).reshape(len(q), basis.m)
    if basis.position.periodic:
        q = np.mod(q, TWO_PI)
    tensor = np.asarray(coeffs, dtype=float).reshape(basis.shape)
    out = np.einsum("ni,i...->n...", basis.position.values(q), tensor)
    out = np.einsum("na,na...->n...", hermite_values(p, basis.n_p, basis.beta), out)
    for j in range(basis.m):
        out = np.einsum("nb,nb...->n...", hermite_values(z[:, j], basis.n_z, basis.beta), out)
    return out
