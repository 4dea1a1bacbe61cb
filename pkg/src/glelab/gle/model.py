"""The extended (q, p, z) system and its memory kernel.

A GleModel holds the full parameter set: spatial dimension d, number of
auxiliary modes m, couplings lambda_j, rates alpha_j, inverse temperature
beta and the potential. The stochastic system it defines is

    dq   = p dt
    dp   = (-grad V(q) + sum_j lambda_j z_j) dt
    dz_j = (-lambda_j p - alpha_j z_j) dt + sqrt(2 alpha_j / beta) dW_j

and its memory kernel is gamma(t) = sum_j lambda_j**2 exp(-alpha_j |t|).
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..core.errors import DomainError, ValidationError
from ..core.models import DomainKind, ModelConfig
from .admissibility import confining_admissibility
from .potentials import Potential, build_potential

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GleModel:
    """Immutable parameter set; safe to share across workers."""

    lam: tuple[float, ...]
    alpha: tuple[float, ...]
    beta: float
    potential: Potential
    d: int = 1
    domain_kind: DomainKind = DomainKind.TORUS
    fingerprint: str = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", tuple(float(x) for x in self.lam))
        object.__setattr__(self, "alpha", tuple(float(x) for x in self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "domain_kind", DomainKind(self.domain_kind))

        if self.d < 1:
            raise DomainError(f"d must be >= 1 (got {self.d})", path="d")
        if len(self.lam) < 1:
            raise DomainError("m must be >= 1 (no auxiliary modes given)", path="m")
        if len(self.lam) != len(self.alpha):
            raise DomainError(
                f"lambda and alpha lengths differ ({len(self.lam)} vs {len(self.alpha)})",
                path="alpha",
            )
        for j, a in enumerate(self.alpha):
            if not a > 0:
                raise DomainError(f"alpha[{j}] must be > 0 (got {a})", path=f"alpha[{j}]")
        if not self.beta > 0:
            raise DomainError(f"beta must be > 0 (got {self.beta})", path="beta")

        if self.domain_kind is DomainKind.TORUS and not self.potential.is_periodic:
            raise DomainError(
                f"torus domain needs a 2*pi-periodic potential (got '{self.potential.kind}')",
                path="potential.kind",
            )
        if self.domain_kind is DomainKind.CONFINING and self.potential.is_periodic:
            raise DomainError(
                f"potential '{self.potential.kind}' is periodic, not confining",
                path="potential.kind",
            )

        object.__setattr__(self, "fingerprint", self._compute_fingerprint())

    @property
    def m(self) -> int:
        return len(self.lam)

    @property
    def lam_array(self) -> np.ndarray:
        return np.asarray(self.lam)

    @property
    def alpha_array(self) -> np.ndarray:
        return np.asarray(self.alpha)

    @property
    def is_torus(self) -> bool:
        return self.domain_kind is DomainKind.TORUS

    @property
    def noise_scale(self) -> np.ndarray:
        """sqrt(2 alpha_j / beta) per mode."""
        return np.sqrt(2.0 * self.alpha_array / self.beta)

    def linear_drift(self) -> np.ndarray:
        """Drift matrix M of the (p, z) block for one coordinate: d(p,z) = -M (p,z) dt + ...

        M = [[0, -lambda^T], [lambda, diag(alpha)]].
        """
        m = self.m
        M = np.zeros((m + 1, m + 1))
        M[0, 1:] = -self.lam_array
        M[1:, 0] = self.lam_array
        M[1:, 1:] = np.diag(self.alpha_array)
        return M

    def describe(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "lambda": list(self.lam),
            "alpha": list(self.alpha),
            "beta": self.beta,
            "domain_kind": self.domain_kind.value,
            "potential": self.potential.describe(),
        }

    def _compute_fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def with_params(self, **changes) -> "GleModel":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class State:
    """Phase point x = (q, p, z) with q, p of shape (d,) and z of shape (m, d)."""

    q: np.ndarray
    p: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        z = np.asarray(self.z, dtype=float)
        if z.ndim < 2:
            z = z.reshape(-1, q.shape[0])
        if p.shape != q.shape or z.shape[1:] != q.shape:
            raise ValidationError(
                f"inconsistent state shapes q{q.shape}, p{p.shape}, z{z.shape}"
            )
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "z", z)

    @property
    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(a))) for a in (self.q, self.p, self.z))

    def require_finite(self) -> "State":
        if not self.is_finite:
            raise ValidationError("state contains non-finite entries", code="non_finite_state")
        return self

    def wrapped(self) -> "State":
        return State(np.mod(self.q, TWO_PI), self.p, self.z)


@dataclass(frozen=True, eq=False)
class StateBatch:
    """n phase points: q, p of shape (n, d) and z of shape (n, m, d)."""

    q: np.ndarray
    p: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        if self.q.ndim != 2 or self.p.shape != self.q.shape or self.z.ndim != 3:
            raise ValidationError(
                f"inconsistent batch shapes q{self.q.shape}, p{self.p.shape}, z{self.z.shape}"
            )

    def __len__(self) -> int:
        return self.q.shape[0]

    def state(self, i: int) -> State:
        return State(self.q[i], self.p[i], self.z[i])

    def take(self, idx) -> "StateBatch":
        return StateBatch(self.q[idx], self.p[idx], self.z[idx])

    @classmethod
    def stack(cls, states: list[State]) -> "StateBatch":
        return cls(
            np.stack([s.q for s in states]),
            np.stack([s.p for s in states]),
            np.stack([s.z for s in states]),
        )


# ============================================================================
# Kernel and fluctuation-dissipation
# ============================================================================


def is_free(model: GleModel) -> bool:
    """True when grad V vanishes identically (checked on a grid)."""
    grid = np.linspace(-3.0, 3.0, 257)
    return bool(np.allclose(model.potential.profile_grad(grid), 0.0, atol=1e-14))


def kernel_eval(model: GleModel, t: float | np.ndarray) -> float | np.ndarray:
    """gamma(t) = sum_j lambda_j**2 exp(-alpha_j |t|), vectorized over t."""
    t_arr = np.abs(np.asarray(t, dtype=float))
    lam2 = model.lam_array**2
    values = (lam2 * np.exp(-np.multiply.outer(t_arr, model.alpha_array))).sum(axis=-1)
    return float(values) if np.ndim(values) == 0 else values


def kernel_mass(model: GleModel) -> float:
    """Integral of gamma over [0, inf): sum_j lambda_j**2 / alpha_j (the white-noise friction)."""
    return float(np.sum(model.lam_array**2 / model.alpha_array))


@dataclass(frozen=True)
class FdtReport:
    passed: bool
    residual: float
    tolerance: float


def check_fdt(drift: np.ndarray, noise: np.ndarray, beta: float) -> FdtReport:
    """Check C C^T = (A + A^T) / beta in Frobenius norm.

    Passes iff the residual is at most 1e-12 * max(1, ||A||_F).
    """
    A = np.atleast_2d(np.asarray(drift, dtype=float))
    C = np.atleast_2d(np.asarray(noise, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != C.shape:
        raise ValidationError(
            f"drift and noise matrices must be square of equal size "
            f"(got {A.shape} and {C.shape})",
            code="dimension_mismatch",
        )
    if not beta > 0:
        raise DomainError(f"beta must be > 0 (got {beta})", path="beta")
    residual = float(np.linalg.norm(C @ C.T - (A + A.T) / beta, ord="fro"))
    tolerance = 1e-12 * max(1.0, float(np.linalg.norm(A, ord="fro")))
    return FdtReport(passed=residual <= tolerance, residual=residual, tolerance=tolerance)


def canonical_embedding(model: GleModel) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal (A, C) pair of the auxiliary OU block."""
    return np.diag(model.alpha_array), np.diag(model.noise_scale)


# ============================================================================
# Construction from config
# ============================================================================


def build_model(config: ModelConfig, check_admissibility: bool = True) -> GleModel:
    """Build a GleModel from its config block.

    Confining models must pass the admissibility report.

    Raises:
        DomainError: Invalid parameters or an inadmissible confining potential
    """
    config.check_domain()
    potential = build_potential(config.potential)
    model = GleModel(
        lam=tuple(config.lambda_),
        alpha=tuple(config.alpha),
        beta=config.beta,
        potential=potential,
        d=config.d,
        domain_kind=config.domain_kind,
    )
    if check_admissibility and model.domain_kind is DomainKind.CONFINING:
        report = confining_admissibility(potential, d=model.d)
        if not report.passed:
            failed = ", ".join(c.name for c in report.conditions if not c.passed)
            raise DomainError(
                f"potential '{potential.kind}' fails admissibility: {failed}",
                path="model.potential",
                details={"report": report.to_dict()},
            )
    return model
