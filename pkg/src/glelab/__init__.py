"""glelab - simulation and verification lab for the generalized Langevin equation.

glelab simulates GLEs with a sum-of-exponentials memory kernel through their
Markovian embedding and checks the long-time theory numerically: effective
diffusion, white-noise limit, relaxation to equilibrium, short-time smoothing
and Lyapunov drift.

Basic Usage:
    >>> from glelab import parse_config, run_experiment
    >>>
    >>> config = parse_config({
    ...     "model": {"lambda": [1.0], "alpha": [1.0], "beta": 1.0,
    ...               "potential": {"kind": "zero"}},
    ...     "experiment": {"kind": "homogenization"},
    ... })
    >>> result = run_experiment(config, workers=4)
    >>> result.passed

Public API:
    Experiments:
        - run_experiment: Run a registered pipeline and persist artifacts
        - list_experiments: Registered experiment kinds

    Configuration:
        - parse_config, load_config: Validated RunConfig from a mapping or YAML

    Models:
        - GleModel, State: Model and phase-space state
        - ExperimentReport, EstimateWithCI, Verdict: Results

    Errors:
        - GleLabError and its subclasses
"""

from .core.errors import (
    BudgetError,
    ConfigError,
    DomainError,
    EstimationError,
    ExperimentError,
    GleLabError,
    SolverError,
    ValidationError,
)
from .core.loaders import load_config, parse_config
from .core.models import EstimateWithCI, ExperimentReport, RunConfig, Verdict
from .experiments import ExperimentResult, list_experiments, run_experiment
from .gle import GleModel, State, build_model, build_potential
from .version import __version__

__all__ = [
    # Version
    "__version__",
    # Experiments
    "run_experiment",
    "ExperimentResult",
    "list_experiments",
    # Configuration
    "parse_config",
    "load_config",
    "RunConfig",
    # Models
    "GleModel",
    "State",
    "build_model",
    "build_potential",
    "ExperimentReport",
    "EstimateWithCI",
    "Verdict",
    # Errors
    "GleLabError",
    "ConfigError",
    "DomainError",
    "ValidationError",
    "BudgetError",
    "SolverError",
    "EstimationError",
    "ExperimentError",
]
