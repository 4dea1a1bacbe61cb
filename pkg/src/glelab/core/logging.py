"""Logging for glelab.

All modules log under the ``glelab`` logger. Console output goes to stderr
through rich so that ``--format json`` keeps stdout machine-readable; an
optional plain-text file handler records the same messages for a run.
"""

import logging
import os
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

PACKAGE_LOGGER = "glelab"

# Level used when neither --verbose nor GLELAB_LOG_LEVEL is given
QUIET_LEVEL = logging.WARNING

FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

LOG_LEVEL_ENV = "GLELAB_LOG_LEVEL"


def level_from_env(default: int = QUIET_LEVEL) -> int:
    """Level named by GLELAB_LOG_LEVEL, or ``default`` when unset or unknown."""
    name = os.environ.get(LOG_LEVEL_ENV)
    if not name:
        return default
    level = logging.getLevelName(name.upper())
    return level if isinstance(level, int) else default


def configure_logging(
    level: int = QUIET_LEVEL,
    log_file: Optional[Path] = None,
    console: bool = True,
) -> None:
    """Replace the handlers of the package logger.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Also write plain-text records here (parent dirs are created)
        console: Attach a rich handler on stderr

    Example:
        configure_logging(level=logging.DEBUG, log_file=Path("glelab-out/run.log"))
    """
    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.setLevel(level)
    logger.handlers.clear()

    if console:
        handler = RichHandler(
            console=Console(stderr=True),
            show_path=level <= logging.DEBUG,
            log_time_format=f"[{DATE_FORMAT}]",
            rich_tracebacks=True,
        )
        handler.setLevel(level)
        logger.addHandler(handler)

    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(level)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(file_handler)

    logger.propagate = False


def get_logger(name: str) -> logging.Logger:
    """Logger for a module, e.g. ``get_logger(__name__)`` inside glelab.spectral.solvers."""
    return logging.getLogger(name)


def setup_logging(verbose: bool = False, log_file: Optional[Path] = None) -> None:
    """CLI entry: DEBUG with ``--verbose``, else GLELAB_LOG_LEVEL or WARNING."""
    level = logging.DEBUG if verbose else level_from_env()
    configure_logging(level=level, log_file=log_file)


configure_logging(level=level_from_env())
