"""Time-stepping schemes for the extended system.

Arrays are batched: q and p have shape (..., d), z has shape (..., m, d) and
a step consumes increments of shape (..., m + 1, d) with variance dt.

``EulerMaruyama`` is the explicit scheme. ``OUSplitting`` is a Strang
composition: half a position drift, an exact Gaussian update of the linear
(p, z) block under the frozen force, and another half drift. For a constant
force the (p, z) transition law is exact for any dt.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from ..core.errors import BudgetError, ValidationError
from ..core.logging import get_logger
from ..core.models import SchemeKind
from ..gle.model import GleModel, State

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi

# Explicit-scheme stability threshold on dt * max(alpha)
EM_STIFFNESS_LIMIT = 0.1


def ou_transition(drift: np.ndarray, diffusion: np.ndarray, dt: float):
    """Exact transition of dX = -drift X dt + dW_Q over dt.

    Van Loan's block exponential of [[drift, Q], [0, -drift^T]] dt gives
    Phi = exp(-drift dt) and the covariance
    Sigma = int_0^dt exp(-drift s) Q exp(-drift^T s) ds.

    Returns:
        (Phi, Sigma), Sigma symmetrized
    """
    n = drift.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = drift
    block[:n, n:] = diffusion
    block[n:, n:] = -drift.T
    F = expm(block * dt)
    phi = F[n:, n:].T
    sigma = phi @ F[:n, n:]
    return phi, 0.5 * (sigma + sigma.T)


def forcing_integral(drift: np.ndarray, dt: float) -> np.ndarray:
    """int_0^dt exp(-drift s) e_0 ds, the response of the block to a unit force on p."""
    n = drift.shape[0]
    block = np.zeros((n + 1, n + 1))
    block[:n, :n] = -drift
    block[0, n] = 1.0
    return expm(block * dt)[:n, n]


def psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root, negative round-off eigenvalues clipped to zero."""
    w, U = np.linalg.eigh(0.5 * (matrix + matrix.T))
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T


class IntegratorScheme(ABC):
    """A time-stepping rule for one model and step size."""

    kind: SchemeKind

    def __init__(self, model: GleModel, dt: float):
        if not dt > 0:
            raise ValidationError(f"dt must be > 0 (got {dt})", code="invalid_step")
        self.model = model
        self.dt = float(dt)

    @abstractmethod
    def advance(
        self, q: np.ndarray, p: np.ndarray, z: np.ndarray, increments: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """One step on batched arrays (returns new arrays)."""

    def _wrap(self, q: np.ndarray) -> np.ndarray:
        return np.mod(q, TWO_PI) if self.model.is_torus else q

    def _force(self, q: np.ndarray) -> np.ndarray:
        return -self.model.potential.grad(q)

    def step(self, state: State, increments: np.ndarray) -> State:
        """Advance a single State."""
        state.require_finite()
        increments = np.asarray(increments, dtype=float)
        q, p, z = self.advance(state.q, state.p, state.z, increments)
        return State(q, p, z)


class EulerMaruyama(IntegratorScheme):
    """Explicit Euler-Maruyama; uses increment channels 0..m-1."""

    kind = SchemeKind.EULER_MARUYAMA

    def __init__(self, model: GleModel, dt: float, check_stiffness: bool = True):
        super().__init__(model, dt)
        stiffness = self.dt * float(np.max(model.alpha_array))
        if check_stiffness and stiffness > EM_STIFFNESS_LIMIT * (1 + 1e-12):
            raise BudgetError(
                f"euler_maruyama needs dt * max(alpha) <= {EM_STIFFNESS_LIMIT} "
                f"(got {stiffness:.4g}); reduce dt or use ou_splitting",
                code="unstable_step",
                details={"dt": self.dt, "max_alpha": float(np.max(model.alpha_array))},
            )
        self._lam = model.lam_array[:, None]
        self._alpha = model.alpha_array[:, None]
        self._scale = model.noise_scale[:, None]

    def advance(self, q, p, z, increments):
        m = self.model.m
        dW = increments[..., :m, :]
        dt = self.dt
        coupling = np.sum(self._lam * z, axis=-2)
        q_new = self._wrap(q + p * dt)
        p_new = p + (self._force(q) + coupling) * dt
        z_new = z + (-self._lam * p[..., None, :] - self._alpha * z) * dt + self._scale * dW
        return q_new, p_new, z_new


@dataclass(frozen=True, eq=False)
class SplittingCache:
    """Per-(model, dt) exact Gaussian transition of the (p, z) block."""

    phi: np.ndarray
    forcing: np.ndarray
    sigma: np.ndarray
    sigma_sqrt: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, model: GleModel, dt: float) -> "SplittingCache":
        M = model.linear_drift()
        Q = np.zeros_like(M)
        Q[1:, 1:] = np.diag(2.0 * model.alpha_array / model.beta)
        phi, sigma = ou_transition(M, Q, dt)
        return cls(
            phi=phi,
            forcing=forcing_integral(M, dt),
            sigma=sigma,
            sigma_sqrt=psd_sqrt(sigma),
        )


class OUSplitting(IntegratorScheme):
    """Strang splitting with an exact Ornstein-Uhlenbeck (p, z) block.

    All m + 1 increment channels are used: the Gaussian update draws
    Sigma_dt^(1/2) xi with xi = increments / sqrt(dt).
    """

    kind = SchemeKind.OU_SPLITTING

    def __init__(self, model: GleModel, dt: float):
        super().__init__(model, dt)
        self.cache = SplittingCache.build(model, self.dt)
        logger.debug(
            f"Built splitting cache dt={self.dt}: "
            f"trace(Sigma)={float(np.trace(self.cache.sigma)):.6g}"
        )

    def advance(self, q, p, z, increments):
        if increments.shape[-2] != self.model.m + 1:
            raise ValidationError(
                f"ou_splitting needs {self.model.m + 1} noise channels "
                f"(got {increments.shape[-2]})",
                code="dimension_mismatch",
            )
        half = 0.5 * self.dt
        c = self.cache
        q_mid = q + p * half
        force = self._force(q_mid)
        y = np.concatenate([p[..., None, :], z], axis=-2)
        xi = increments / math.sqrt(self.dt)
        y_new = (
            np.einsum("ab,...bd->...ad", c.phi, y)
            + c.forcing[:, None] * force[..., None, :]
            + np.einsum("ab,...bd->...ad", c.sigma_sqrt, xi)
        )
        p_new = y_new[..., 0, :]
        z_new = y_new[..., 1:, :]
        q_new = self._wrap(q_mid + p_new * half)
        return q_new, p_new, z_new


def build_scheme(kind: SchemeKind | str, model: GleModel, dt: float) -> IntegratorScheme:
    kind = SchemeKind(kind)
    if kind is SchemeKind.EULER_MARUYAMA:
        return EulerMaruyama(model, dt)
    return OUSplitting(model, dt)


def step_em(model: GleModel, state: State, dt: float, noise_increments) -> State:
    """One Euler-Maruyama step; increments of shape (m, d) or (m + 1, d)."""
    increments = np.asarray(noise_increments, dtype=float)
    if increments.ndim == 1:
        increments = increments[:, None]
    if increments.shape[0] < model.m or increments.shape[-1] != state.q.shape[0]:
        raise ValidationError(
            f"noise increments must have shape ({model.m}, {state.q.shape[0]}) "
            f"(got {increments.shape})",
            code="dimension_mismatch",
        )
    return EulerMaruyama(model, dt, check_stiffness=False).step(state, increments)


def step_splitting(model: GleModel, state: State, dt: float, noise_increments) -> State:
    """One splitting step; increments of shape (m + 1, d), variance dt."""
    increments = np.asarray(noise_increments, dtype=float)
    if increments.ndim == 1:
        increments = increments[:, None]
    return OUSplitting(model, dt).step(state, increments)
