"""Configuration loaders for glelab.

``parse_config`` turns a raw document (dict) into a validated RunConfig with
all defaults materialized; ``load_config`` reads it from a YAML file.
"""

from pathlib import Path
from typing import Any

import yaml
from pydantic import ValidationError

from .env_vars import substitute_env_vars
from .errors import ConfigError
from .logging import get_logger
from .models import RunConfig

logger = get_logger(__name__)


def load_yaml(path: Path) -> dict[str, Any]:
    """Load and parse a YAML file.

    Raises:
        ConfigError: If file cannot be read or YAML is invalid
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"Configuration file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML syntax in {path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"Failed to read {path}: {e}") from e

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(
            f"Invalid YAML in {path}: expected mapping, got {type(data).__name__}"
        )
    return data


def _format_location(loc: tuple) -> str:
    return ".".join(str(part) for part in loc)


def parse_config(document: dict[str, Any]) -> RunConfig:
    """Validate a raw configuration document.

    Args:
        document: Parsed mapping (e.g. from YAML)

    Returns:
        RunConfig with every default filled in

    Raises:
        ConfigError: Schema violation (names the offending path)
        DomainError: Physically invalid parameter (names e.g. ``alpha[0]``)

    Example:
        >>> cfg = parse_config({"model": {"alpha": [2.0], "lambda": [1.0]}})
        >>> cfg.numerics.scheme.value
        'ou_splitting'
    """
    if not isinstance(document, dict):
        raise ConfigError(f"Config must be a mapping, got {type(document).__name__}")

    resolved = substitute_env_vars(document)

    try:
        config = RunConfig.model_validate(resolved)
    except ValidationError as e:
        first = e.errors()[0]
        path = _format_location(first["loc"])
        raise ConfigError(
            f"Invalid config at '{path}': {first['msg']}",
            details={"path": path, "errors": len(e.errors())},
        ) from e

    config.check_domain()
    logger.debug(f"Parsed config: experiment={config.experiment.kind.value}")
    return config


def merge_overrides(document: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Merge overrides into a document; nested mappings merge key by key, None is skipped.

    Example:
        >>> merge_overrides({"budget": {"steps": 10}}, {"budget": {"replicas": 4}, "seed": None})
        {'budget': {'steps': 10, 'replicas': 4}}
    """
    merged = dict(document)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            base = merged.get(key)
            merged[key] = merge_overrides(base if isinstance(base, dict) else {}, value)
        else:
            merged[key] = value
    return merged


def load_config(path: Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Load a RunConfig from YAML (or defaults when ``path`` is None), applying overrides."""
    document: dict[str, Any] = {}
    if path is not None:
        logger.debug(f"Loading config from {path}")
        document = load_yaml(path)
    if overrides:
        document = merge_overrides(document, overrides)
    return parse_config(document)


def effective_config(config: RunConfig) -> dict[str, Any]:
    """Fully materialized, re-parseable form of a config."""
    return config.model_dump(mode="json", by_alias=True)
