"""Environment handling for glelab.

This module loads a local .env file, substitutes ${VAR_NAME} placeholders in
configuration documents, and resolves the worker-count override.
"""

import os
import re
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv

from .errors import ConfigError
from .logging import get_logger

logger = get_logger(__name__)

# Pattern for ${VAR_NAME} placeholders
ENV_VAR_PATTERN = re.compile(r"\$\{([A-Z_][A-Z0-9_]*)\}")

WORKERS_ENV = "GLELAB_WORKERS"


def load_env_file(env_file: Path | None = None) -> None:
    """Load environment variables from a .env file.

    Args:
        env_file: Path to .env file. If None, looks for .env in current directory.

    Note:
        Variables already set in the environment take precedence.
    """
    if env_file is None:
        env_file = Path.cwd() / ".env"

    if env_file.exists():
        logger.debug(f"Loading environment variables from {env_file}")
        load_dotenv(env_file, override=False)
    else:
        logger.debug(f"No .env file found at {env_file}")


def substitute_env_vars(value: Any) -> Any:
    """Recursively substitute ${VAR_NAME} placeholders in a value.

    A string that is exactly one placeholder is parsed as YAML scalar after
    substitution, so ``seed: ${SEED}`` yields an int.

    Raises:
        ConfigError: If a referenced variable is not set

    Examples:
        >>> os.environ['GLELAB_DT'] = '0.005'
        >>> substitute_env_vars({'dt': '${GLELAB_DT}'})
        {'dt': 0.005}
    """
    if isinstance(value, str):
        return _substitute_string(value)
    elif isinstance(value, dict):
        return {k: substitute_env_vars(v) for k, v in value.items()}
    elif isinstance(value, list):
        return [substitute_env_vars(item) for item in value]
    else:
        return value


def _substitute_string(text: str) -> Any:
    def replace_match(match: re.Match) -> str:
        var_name = match.group(1)
        value = os.environ.get(var_name)
        if value is None:
            raise ConfigError(
                f"Environment variable '{var_name}' not set. "
                f"Set it in your environment or .env file.",
                details={"variable": var_name},
            )
        return value

    substituted = ENV_VAR_PATTERN.sub(replace_match, text)
    if substituted != text and ENV_VAR_PATTERN.fullmatch(text):
        return yaml.safe_load(substituted)
    return substituted


def resolve_workers(cli_workers: int | None = None) -> int:
    """Worker count: CLI flag > GLELAB_WORKERS > 1.

    Raises:
        ConfigError: If the environment value is not a positive integer
    """
    if cli_workers is not None:
        if cli_workers < 1:
            raise ConfigError(f"--workers must be >= 1 (got {cli_workers})")
        return cli_workers

    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer (got '{raw}')") from None
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1 (got {workers})")
    return workers
