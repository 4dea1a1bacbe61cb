"""Exception hierarchy for glelab.

This module defines a clear taxonomy of errors to help users and developers
understand what went wrong and how to fix it.

All custom exceptions inherit from GleLabError, making it easy to catch
all glelab-specific errors in a single except clause. Every error carries a
machine-readable ``code`` and a ``details`` dict so the CLI can emit a
structured failure list.
"""

from typing import Any


class GleLabError(Exception):
    """Base exception for all glelab errors.

    Example:
        try:
            glelab.solve_poisson(L, rhs)
        except GleLabError as e:
            print(f"glelab error [{e.code}]: {e}")
    """

    default_code = "glelab_error"

    def __init__(
        self,
        message: str,
        *,
        code: str | None = None,
        details: dict[str, Any] | None = None,
    ):
        super().__init__(message)
        self.code = code or self.default_code
        self.details = details or {}

    def to_dict(self) -> dict[str, Any]:
        """Machine-readable representation used in failure lists."""
        return {
            "error": type(self).__name__,
            "code": self.code,
            "message": str(self),
            "details": self.details,
        }


class ConfigError(GleLabError):
    """Configuration-related errors.

    Raised when:
    - Config files are missing or cannot be read
    - YAML syntax is invalid
    - Unknown keys or wrong types (schema violations)
    - Environment variables referenced by a config are missing

    Examples:
        - "Configuration file not found: runs/free.yaml"
        - "Invalid config at 'numerics.dt': Input should be a valid number"
        - "Unknown key 'model.gamma'"
    """

    default_code = "config_error"


class DomainError(ConfigError):
    """Physically invalid parameter values.

    Raised when a parameter is well-typed but outside its physical domain
    (alpha <= 0, beta <= 0, epsilon <= 0, d < 1, ...). The offending path is
    kept in ``path`` and repeated in the message.

    Examples:
        - "alpha[0] must be > 0 (got -1.0)"
        - "epsilon must be > 0 (got 0.0)"
    """

    default_code = "domain_error"

    def __init__(self, message: str, *, path: str = "", **kwargs: Any):
        super().__init__(message, **kwargs)
        self.path = path
        self.details.setdefault("path", path)


class ValidationError(GleLabError):
    """Violated preconditions of an operation.

    Raised when:
    - Matrix or noise dimensions do not match
    - A state contains non-finite entries
    - A right-hand side is not mean-zero
    - A sampler/estimator is asked for an unsupported case
    - Lyapunov constants break the positivity constraints

    Examples:
        - "drift and noise matrices must be square of equal size"
        - "rhs has non-zero mean 3.2e-03"
    """

    default_code = "validation_error"


class BudgetError(GleLabError):
    """Resource budget exceeded (checked before any work is launched).

    Examples:
        - "Requested 2,000,000 integrator steps exceeds budget 1,000,000"
        - "Spectral dimension 31,104 exceeds budget 20,000"
    """

    default_code = "budget_exceeded"


class SolverError(GleLabError):
    """Numerical solver failures (GMRES, eigensolver, matrix exponential).

    The residual, when known, is stored in ``residual``.
    """

    default_code = "solver_failed"

    def __init__(self, message: str, *, residual: float | None = None, **kwargs: Any):
        super().__init__(message, **kwargs)
        self.residual = residual
        if residual is not None:
            self.details.setdefault("residual", residual)


class EstimationError(GleLabError):
    """Statistical estimation preconditions failed.

    Raised when:
    - An MSD fit window is still ballistic
    - An autocorrelation has not decayed at the lag horizon
    - A fit has too few usable points
    - Coupled path sets do not share noise fingerprints

    Note: Per-leg estimation failures inside an experiment are recorded as
    FAIL verdicts, not raised.
    """

    default_code = "estimation_failed"


class ExperimentError(GleLabError):
    """Experiment pipeline errors.

    Examples:
        - "need ≥ 3 epsilon values (got 1)"
        - "spectral cross-check requires d=1"
    """

    default_code = "experiment_failed"
