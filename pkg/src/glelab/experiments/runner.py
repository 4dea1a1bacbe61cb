"""Experiment execution for glelab.

``run_experiment`` looks up the pipeline registered for the config's
experiment kind, runs it and persists the artifacts.

Key features:
- Per-leg error handling (a failed leg is a FAIL verdict, not a crash)
- Effective config written before any computation
- Deterministic report, timing kept in a separate file
- Progress reporting callbacks

Example:
    >>> config = load_config(Path("configs/free-homogenization.yaml"))
    >>> result = run_experiment(config, workers=4, out_dir=Path("out/free"))
    >>> print(f"{result.report.kind}: {'PASS' if result.passed else 'FAIL'}")
"""

import time
from dataclasses import dataclass, field
from pathlib import Path

from ..core.errors import GleLabError
from ..core.loaders import effective_config
from ..core.logging import get_logger
from ..core.models import ExperimentReport, RunConfig
from ..core.storage import (
    save_effective_config,
    save_failures,
    save_report,
    save_series,
    save_timing,
)
from ..display.formatting import save_report_markdown
from .base import RunContext, StageCallback
from .registry import get_experiment

logger = get_logger(__name__)

MARKDOWN_FILENAME = "report.md"


@dataclass
class ExperimentResult:
    """A finished run: its report, where it was written, and how long each stage took."""

    report: ExperimentReport
    out_dir: Path | None = None
    artifacts: list[Path] = field(default_factory=list)
    timing: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.report.passed


def failure_list(report: ExperimentReport) -> list[dict]:
    """Failed verdicts followed by failed legs, as plain dicts."""
    failed = [
        {"criterion": v.criterion, "quantity": v.quantity, "value": v.value,
         "target": v.target, "detail": v.detail}
        for v in report.verdicts
        if not v.passed
    ]
    return failed + list(report.failures)


def series_filename(name: str) -> str:
    return f"series-{name.replace('/', '_').replace('=', '-')}.csv"


def _write_artifacts(report: ExperimentReport, out_dir: Path) -> list[Path]:
    artifacts = [save_report(report, out_dir)]
    markdown = out_dir / MARKDOWN_FILENAME
    save_report_markdown(report, markdown, max_series_rows=None)
    artifacts.append(markdown)

    meta = {
        "config_hash": report.config_hash,
        "seed": report.seed,
        "model_fingerprint": report.model_fingerprint or "none",
    }
    for name, columns in report.series.items():
        if not columns:
            continue
        artifacts.append(save_series(out_dir / series_filename(name), columns, meta))

    if not report.passed:
        artifacts.append(save_failures(failure_list(report), out_dir))
    return artifacts


def run_experiment(
    config: RunConfig,
    workers: int = 1,
    out_dir: Path | None = None,
    progress: StageCallback | None = None,
) -> ExperimentResult:
    """Run the pipeline for ``config.experiment.kind``.

    Args:
        config: Validated run configuration
        workers: Thread-pool size for replica chunks and legs
        out_dir: Artifact directory; nothing is written when None
        progress: Optional callback ``(stage, done, total)``

    Returns:
        ExperimentResult with the report and the written artifact paths

    Raises:
        ConfigError: Unknown experiment kind or invalid pipeline parameters
        BudgetError: The requested work exceeds the configured budget
        GleLabError: Pipeline-level failure (a failures.json is written first)
    """
    kind = config.experiment.kind.value
    pipeline = get_experiment(kind)
    ctx = RunContext(config=config, workers=workers, out_dir=out_dir, progress=progress)

    artifacts: list[Path] = []
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        artifacts.append(save_effective_config(effective_config(config), out_dir))

    logger.info(f"Running experiment '{kind}' (seed={config.seed}, workers={workers})")
    start = time.perf_counter()
    try:
        report = pipeline(ctx)
    except GleLabError as e:
        logger.error(f"Experiment '{kind}' failed [{e.code}]: {e}")
        if out_dir is not None:
            save_failures([{"leg": kind, **e.to_dict()}], out_dir)
        raise
    ctx.timing["total"] = time.perf_counter() - start

    if out_dir is not None:
        artifacts.extend(_write_artifacts(report, out_dir))
        artifacts.append(save_timing(ctx.timing, out_dir))

    status = "PASS" if report.passed else "FAIL"
    logger.info(
        f"Experiment '{kind}' finished: {status} "
        f"({len(report.verdicts)} verdicts, {ctx.timing['total']:.2f}s)"
    )
    return ExperimentResult(report=report, out_dir=out_dir, artifacts=artifacts, timing=ctx.timing)
