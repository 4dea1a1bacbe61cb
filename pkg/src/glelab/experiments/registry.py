"""Experiment registry.

Pipelines register under their experiment kind and are looked up by the
CLI and by ``run_experiment``.

Example:
    # Register a pipeline
    register_experiment("homogenization", run_homogenization)

    # Look it up
    runner = get_experiment("homogenization")
    report = runner(ctx)

    # List all pipelines
    print(list_experiments())  # ["check", "commutators", "homogenization", ...]
"""

from typing import TYPE_CHECKING, Callable

from ..core.errors import ConfigError
from ..core.logging import get_logger
from ..core.models import ExperimentReport

if TYPE_CHECKING:
    from .base import RunContext

logger = get_logger(__name__)

Pipeline = Callable[["RunContext"], ExperimentReport]

# Global registry: experiment kind -> pipeline function
EXPERIMENT_REGISTRY: dict[str, Pipeline] = {}


def register_experiment(kind: str, pipeline: Pipeline) -> None:
    """Register a pipeline in the global registry.

    Args:
        kind: Experiment kind (e.g., "homogenization", "whitenoise")
        pipeline: Callable taking a RunContext and returning an ExperimentReport

    Raises:
        ConfigError: If the kind is invalid or the pipeline is not callable
    """
    if not kind:
        raise ConfigError("Experiment kind cannot be empty")

    if not kind.replace("_", "").isalnum():
        raise ConfigError(
            f"Experiment kind '{kind}' must be alphanumeric with underscores only"
        )

    if not callable(pipeline):
        raise ConfigError(f"Pipeline for '{kind}' must be callable")

    if kind in EXPERIMENT_REGISTRY:
        logger.warning(
            f"Experiment '{kind}' already registered. Overwriting with {pipeline.__name__}"
        )

    EXPERIMENT_REGISTRY[kind] = pipeline
    logger.debug(f"Registered experiment '{kind}' -> {pipeline.__name__}")


def get_experiment(kind: str) -> Pipeline:
    """Get a pipeline from the registry.

    Raises:
        ConfigError: If the kind is not registered

    Example:
        >>> pipeline = get_experiment("commutators")
        >>> report = pipeline(ctx)
    """
    if kind not in EXPERIMENT_REGISTRY:
        available = ", ".join(sorted(EXPERIMENT_REGISTRY.keys()))
        raise ConfigError(
            f"Unknown experiment '{kind}'. Available experiments: {available or '(none)'}"
        )

    return EXPERIMENT_REGISTRY[kind]


def list_experiments() -> list[str]:
    """Sorted list of registered experiment kinds."""
    return sorted(EXPERIMENT_REGISTRY.keys())


def is_experiment_registered(kind: str) -> bool:
    return kind in EXPERIMENT_REGISTRY
