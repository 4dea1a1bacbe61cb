"""Storage utilities for glelab run artifacts.

Every run directory holds:

- ``effective-config.yaml`` (fully materialized config)
- ``report.json`` / ``report.md`` (deterministic report)
- ``series-<name>.csv`` (columnar time series, 17 significant digits)
- ``timing.json`` (wall-clock, kept out of the report)
- ``failures.json`` (machine-readable failure list, when any verdict fails)
"""

import json
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp
import yaml
from pydantic import ValidationError as PydanticValidationError

from .errors import ConfigError, GleLabError, ValidationError
from .logging import get_logger
from .models import ExperimentReport
from .serialization import config_hash, to_json, to_serializable

logger = get_logger(__name__)

CONFIG_FILENAME = "effective-config.yaml"
REPORT_FILENAME = "report.json"
TIMING_FILENAME = "timing.json"
FAILURES_FILENAME = "failures.json"

CSV_FORMAT = "%.17g"


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise GleLabError(f"Failed to write {path}: {e}", code="io_error") from e
    return path


def save_effective_config(effective: dict[str, Any], out_dir: Path) -> Path:
    """Persist the materialized config next to the artifacts."""
    path = out_dir / CONFIG_FILENAME
    _write_text(path, yaml.safe_dump(effective, sort_keys=True, default_flow_style=False))
    logger.debug(f"Saved effective config to {path}")
    return path


def save_report(report: ExperimentReport, out_dir: Path) -> Path:
    """Save a report as JSON (byte-for-byte reproducible from config + seed)."""
    path = out_dir / REPORT_FILENAME
    _write_text(path, report.model_dump_json(indent=2) + "\n")
    logger.info(f"Saved {report.kind} report to {path}")
    return path


def load_report(out_dir: Path, verify_hash: bool = True) -> ExperimentReport:
    """Load a report, checking its config hash against the sibling config.

    Raises:
        GleLabError: If the report cannot be read
        ValidationError: code ``hash_mismatch`` when the config was altered
    """
    path = out_dir / REPORT_FILENAME
    try:
        with open(path, encoding="utf-8") as f:
            report = ExperimentReport(**json.load(f))
    except FileNotFoundError:
        raise GleLabError(f"Report not found: {path}", code="io_error") from None
    except (json.JSONDecodeError, PydanticValidationError) as e:
        raise GleLabError(f"Invalid report data in {path}: {e}", code="io_error") from e

    if verify_hash:
        config_path = out_dir / CONFIG_FILENAME
        try:
            with open(config_path, encoding="utf-8") as f:
                effective = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"Cannot read {config_path}: {e}") from e
        actual = config_hash(effective)
        if actual != report.config_hash:
            raise ValidationError(
                f"Config hash mismatch for {out_dir}: report has "
                f"{report.config_hash[:12]}, config hashes to {actual[:12]}",
                code="hash_mismatch",
                details={"expected": report.config_hash, "actual": actual},
            )
    return report


def save_timing(timing: dict[str, float], out_dir: Path) -> Path:
    return _write_text(out_dir / TIMING_FILENAME, to_json(timing, sort_keys=True) + "\n")


def save_failures(failures: list[dict[str, Any]], out_dir: Path) -> Path:
    return _write_text(out_dir / FAILURES_FILENAME, to_json(failures) + "\n")


def series_header(meta: dict[str, Any]) -> str:
    """``key=value`` provenance line placed before the column row."""
    return " ".join(f"{k}={to_serializable(v)}" for k, v in meta.items())


def save_series(
    path: Path,
    columns: dict[str, np.ndarray],
    meta: dict[str, Any],
) -> Path:
    """Write columns as CSV with a provenance header.

    The first line is ``# config_hash=... seed=... model_fingerprint=...``,
    the second the comma-separated column names.
    """
    names = list(columns)
    if not names:
        raise ValidationError(f"No columns to write for {path}")
    data = np.column_stack([np.asarray(columns[n], dtype=float).ravel() for n in names])
    path.parent.mkdir(parents=True, exist_ok=True)
    header = series_header(meta) + "\n" + ",".join(names)
    try:
        np.savetxt(path, data, fmt=CSV_FORMAT, delimiter=",", header=header, comments="# ")
    except OSError as e:
        raise GleLabError(f"Failed to write {path}: {e}", code="io_error") from e
    logger.debug(f"Saved {data.shape[0]} rows to {path}")
    return path


def load_series(path: Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read a CSV written by ``save_series`` back into (columns, meta)."""
    with open(path, encoding="utf-8") as f:
        meta_line = f.readline().lstrip("#").strip()
        names = f.readline().lstrip("#").strip().split(",")
    meta = dict(item.split("=", 1) for item in meta_line.split() if "=" in item)
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return {n: data[:, i] for i, n in enumerate(names)}, meta


def save_sparse(path: Path, matrix: sp.spmatrix, descriptor: dict[str, Any]) -> Path:
    """Export a sparse matrix as (row, col, data, shape) triplets plus basis descriptor."""
    coo = sp.coo_matrix(matrix)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        row=coo.row,
        col=coo.col,
        data=coo.data,
        shape=np.asarray(coo.shape),
        descriptor=np.asarray(to_json(descriptor, pretty=False)),
    )
    return path


def load_sparse(path: Path) -> tuple[sp.csr_matrix, dict[str, Any]]:
    with np.load(path) as f:
        matrix = sp.coo_matrix(
            (f["data"], (f["row"], f["col"])), shape=tuple(f["shape"])
        ).tocsr()
        descriptor = json.loads(str(f["descriptor"]))
    return matrix, descriptor


def save_coefficients(path: Path, coefficients: np.ndarray, descriptor: dict[str, Any]) -> Path:
    """Export a coefficient vector with the descriptor of its basis."""
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        coefficients=np.asarray(coefficients, dtype=float),
        descriptor=np.asarray(to_json(descriptor, pretty=False)),
    )
    return path


def load_coefficients(path: Path) -> tuple[np.ndarray, dict[str, Any]]:
    with np.load(path) as f:
        return f["coefficients"].copy(), json.loads(str(f["descriptor"]))
