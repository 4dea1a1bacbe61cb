"""glelab experiment pipelines.

Each pipeline turns a validated RunConfig into an ExperimentReport with
verdicts. Pipelines register themselves under their experiment kind.

Public API:
    - run_experiment: Run the pipeline for a config and persist artifacts
    - ExperimentResult: Report plus written artifacts and timing
    - RunContext: What a pipeline receives
    - register_experiment / get_experiment / list_experiments: Registry access

Example:
    >>> from glelab.experiments import run_experiment
    >>> from glelab.core.loaders import parse_config
    >>>
    >>> config = parse_config({"experiment": {"kind": "commutators"}})
    >>> result = run_experiment(config)
    >>> result.passed
    True
"""

# Import pipeline modules to trigger registration

# These imports have side effects (register_experiment calls)

from . import (
    check,
    commutators,
    homogenization,
    lyapunov,
    poisson,
    relaxation,
    short_time,
    simulate,
    whitenoise,
)  # noqa: F401
from .base import RunContext
from .registry import (
    get_experiment,
    is_experiment_registered,
    list_experiments,
    register_experiment,
)
from .runner import ExperimentResult, failure_list, run_experiment

__all__ = [
    # Execution
    "run_experiment",
    "ExperimentResult",
    "RunContext",
    "failure_list",
    # Registry
    "register_experiment",
    "get_experiment",
    "list_experiments",
    "is_experiment_registered",
]
