"""Data models for glelab.

This module defines the Pydantic models for run configuration and for the
structured experiment reports. Configuration models reject unknown keys;
report models are designed for deterministic JSON serialization.

Numerical objects (GleModel, State, Trajectory, operator matrices) live next
to the code that uses them and are plain frozen dataclasses.
"""

from enum import Enum
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import DomainError, ValidationError

# ============================================================================
# Enums
# ============================================================================


class DomainKind(str, Enum):
    """Position space of the model."""

    TORUS = "torus"
    CONFINING = "confining"


class SchemeKind(str, Enum):
    """Time integration schemes."""

    EULER_MARUYAMA = "euler_maruyama"
    OU_SPLITTING = "ou_splitting"


class InitKind(str, Enum):
    """Initial law of simulated replicas."""

    GIBBS = "gibbs"
    POINT = "point"
    CUSTOM = "custom"


class ExperimentKind(str, Enum):
    """Registered experiment pipelines."""

    SIMULATE = "simulate"
    HOMOGENIZATION = "homogenization"
    WHITENOISE = "whitenoise"
    RELAXATION = "relaxation"
    SHORT_TIME = "short_time"
    POISSON = "poisson"
    COMMUTATORS = "commutators"
    LYAPUNOV = "lyapunov"
    CHECK = "check"


# ============================================================================
# Configuration Models
# ============================================================================


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class PotentialConfig(_Strict):
    """Potential block: a registered kind plus kind-specific parameters."""

    kind: str = "cosine"
    params: dict[str, Any] = Field(default_factory=dict)

    @field_validator("kind")
    @classmethod
    def validate_kind(cls, v: str) -> str:
        if not v or not v.strip():
            raise ValueError("Potential kind cannot be empty")
        return v.strip().lower()


class ModelConfig(_Strict):
    """Parameter set of the extended system (q, p, z_1..z_m)."""

    d: int = 1
    m: int = 1
    lambda_: list[float] = Field(default_factory=lambda: [1.0], alias="lambda")
    alpha: list[float] = Field(default_factory=lambda: [1.0])
    beta: float = 1.0
    domain_kind: DomainKind = DomainKind.TORUS
    potential: PotentialConfig = Field(default_factory=PotentialConfig)

    def check_domain(self, prefix: str = "") -> None:
        """Raise DomainError for physically invalid values."""
        if self.d < 1:
            raise DomainError(f"{prefix}d must be >= 1 (got {self.d})", path=f"{prefix}d")
        if self.m < 1:
            raise DomainError(f"{prefix}m must be >= 1 (got {self.m})", path=f"{prefix}m")
        for name, values in (("lambda", self.lambda_), ("alpha", self.alpha)):
            if len(values) != self.m:
                raise DomainError(
                    f"{prefix}{name} must have m={self.m} entries (got {len(values)})",
                    path=f"{prefix}{name}",
                )
        for j, a in enumerate(self.alpha):
            if not a > 0:
                raise DomainError(
                    f"{prefix}alpha[{j}] must be > 0 (got {a})", path=f"{prefix}alpha[{j}]"
                )
        if not self.beta > 0:
            raise DomainError(
                f"{prefix}beta must be > 0 (got {self.beta})", path=f"{prefix}beta"
            )


class BasisConfig(_Strict):
    """Fourier x Hermite truncation for the spectral solver."""

    n_q: int = 8
    n_p: int = 8
    n_z: int = 6
    quadrature_points: int = 512

    @field_validator("n_q", "n_p", "n_z")
    @classmethod
    def validate_order(cls, v: int) -> int:
        if v < 1:
            raise ValueError("Basis orders must be >= 1")
        return v


class NumericsConfig(_Strict):
    """Integration and discretization settings."""

    scheme: SchemeKind = SchemeKind.OU_SPLITTING
    dt: float = 0.01
    horizon: float = 10.0
    replicas: int = 64
    stride: int = 1
    init: InitKind = InitKind.GIBBS
    init_point: dict[str, list[float]] | None = None
    basis: BasisConfig = Field(default_factory=BasisConfig)

    def check_domain(self) -> None:
        if not self.dt > 0:
            raise DomainError(f"numerics.dt must be > 0 (got {self.dt})", path="numerics.dt")
        if not self.horizon > 0:
            raise DomainError(
                f"numerics.horizon must be > 0 (got {self.horizon})",
                path="numerics.horizon",
            )
        if self.replicas < 1:
            raise DomainError(
                f"numerics.replicas must be >= 1 (got {self.replicas})",
                path="numerics.replicas",
            )
        if self.stride < 1:
            raise DomainError(
                f"numerics.stride must be >= 1 (got {self.stride})",
                path="numerics.stride",
            )


class BudgetConfig(_Strict):
    """Resource budget checked before any work is launched."""

    steps: int = 1_000_000
    replicas: int = 256
    spectral_dim: int = 20_000


class ExperimentConfig(_Strict):
    """Experiment block: a registered kind plus kind-specific parameters."""

    kind: ExperimentKind = ExperimentKind.SIMULATE
    params: dict[str, Any] = Field(default_factory=dict)

    def check_domain(self) -> None:
        eps = self.params.get("epsilons")
        if eps is not None:
            for i, e in enumerate(eps):
                if not float(e) > 0:
                    raise DomainError(
                        f"epsilon must be > 0 (got {e})",
                        path=f"experiment.params.epsilons[{i}]",
                    )


class RunConfig(_Strict):
    """Complete, validated run configuration."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)
    budget: BudgetConfig = Field(default_factory=BudgetConfig)
    seed: int = 0
    out: str = "glelab-out"

    @field_validator("seed")
    @classmethod
    def validate_seed(cls, v: int) -> int:
        if not 0 <= v < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        return v

    @model_validator(mode="after")
    def sync_mode_count(self) -> "RunConfig":
        # A lone coupling/rate list fixes m when m was left at its default
        if "m" not in self.model.model_fields_set and len(self.model.alpha) == len(
            self.model.lambda_
        ):
            self.model.m = len(self.model.alpha)
        return self

    def check_domain(self) -> None:
        """Run all physical-domain checks (raises DomainError)."""
        self.model.check_domain(prefix="")
        self.numerics.check_domain()
        self.experiment.check_domain()


# ============================================================================
# Result Models
# ============================================================================


class EstimateWithCI(BaseModel):
    """Point estimate with a confidence interval."""

    value: float
    lo: float
    hi: float
    method: str
    n: int = 0
    window: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_order(self) -> "EstimateWithCI":
        if not self.lo <= self.value <= self.hi:
            raise ValidationError(
                f"{self.method} estimate {self.value:.6g} lies outside its interval "
                f"[{self.lo:.6g}, {self.hi:.6g}]",
                code="value_outside_ci",
                details={"value": self.value, "lo": self.lo, "hi": self.hi, "method": self.method},
            )
        return self

    @classmethod
    def from_bootstrap(
        cls,
        value: float,
        boots: Any,
        method: str,
        n: int = 0,
        window: dict[str, float] | None = None,
        confidence: float = 0.95,
    ) -> "EstimateWithCI":
        """Percentiles of the bootstrap spread about its median, centred on ``value``."""
        spread = np.asarray(boots, dtype=float)
        spread = spread - np.median(spread)
        tail = 50.0 * (1.0 - confidence)
        lo, hi = value + np.percentile(spread, [tail, 100.0 - tail])
        return cls(value=value, lo=float(lo), hi=float(hi), method=method, n=n, window=window or {})

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)


class Verdict(BaseModel):
    """Outcome of one quantitative acceptance check."""

    criterion: str
    quantity: str
    value: float | None = None
    target: str
    passed: bool
    detail: str = ""


class ExperimentReport(BaseModel):
    """Structured, reproducible result of one experiment run."""

    kind: str
    model_fingerprint: str = ""
    config_hash: str = ""
    seed: int = 0
    parameters: dict[str, Any] = Field(default_factory=dict)
    estimates: dict[str, EstimateWithCI] = Field(default_factory=dict)
    values: dict[str, Any] = Field(default_factory=dict)
    verdicts: list[Verdict] = Field(default_factory=list)
    failures: list[dict[str, Any]] = Field(default_factory=list)
    series: dict[str, dict[str, list[float]]] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        """True iff there is at least one verdict and all verdicts pass."""
        return bool(self.verdicts) and all(v.passed for v in self.verdicts)

    def add_verdict(
        self,
        criterion: str,
        quantity: str,
        value: float | None,
        target: str,
        passed: bool,
        detail: str = "",
    ) -> Verdict:
        verdict = Verdict(
            criterion=criterion,
            quantity=quantity,
            value=None if value is None else float(value),
            target=target,
            passed=bool(passed),
            detail=detail,
        )
        self.verdicts.append(verdict)
        return verdict


ReportFormat = Literal["table", "json", "markdown"]
