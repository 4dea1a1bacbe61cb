"""Shared plumbing for experiment pipelines.

A pipeline receives a RunContext, builds its model and numerics from the
validated config, runs its legs and returns an ExperimentReport. Legs that
fail with a numerical or statistical error are recorded as FAIL verdicts
carrying the error code; the rest of the report is still assembled.
"""

import math
import time
from collections.abc import Callable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict
from pydantic import ValidationError as PydanticValidationError

from ..core.errors import BudgetError, ConfigError, GleLabError
from ..core.loaders import effective_config
from ..core.logging import get_logger
from ..core.models import EstimateWithCI, ExperimentReport, InitKind, RunConfig
from ..core.serialization import config_hash
from ..gle.model import GleModel, State, build_model
from ..spectral.basis import SpectralBasis, build_basis

logger = get_logger(__name__)

T = TypeVar("T")
P = TypeVar("P", bound="PipelineParams")

# Parameters: (stage, completed, total)
StageCallback = Callable[[str, int, int], None]

# z-score of the 95% intervals reported by the estimators
CI_Z = 1.959963984540054


class PipelineParams(BaseModel):
    """Base of the per-pipeline ``experiment.params`` schemas."""

    model_config = ConfigDict(extra="forbid")


@dataclass
class RunContext:
    """Everything a pipeline needs besides its own parameters."""

    config: RunConfig
    workers: int = 1
    out_dir: Path | None = None
    progress: StageCallback | None = None
    timing: dict[str, float] = field(default_factory=dict)
    _model: GleModel | None = field(default=None, init=False, repr=False)

    @property
    def seed(self) -> int:
        return self.config.seed

    def parse_params(self, schema: type[P]) -> P:
        """Validate ``experiment.params`` against a pipeline schema.

        Raises:
            ConfigError: Unknown key or wrong type (names the offending path)
        """
        try:
            return schema.model_validate(self.config.experiment.params)
        except PydanticValidationError as e:
            first = e.errors()[0]
            path = ".".join(["experiment", "params", *(str(x) for x in first["loc"])])
            raise ConfigError(
                f"Invalid config at '{path}': {first['msg']}", details={"path": path}
            ) from e

    def model(self) -> GleModel:
        if self._model is None:
            self._model = build_model(self.config.model)
        return self._model

    def budget_kwargs(self) -> dict[str, int]:
        budget = self.config.budget
        return {"budget_steps": budget.steps, "max_replicas": budget.replicas}

    def basis(self, model: GleModel, **orders: int) -> SpectralBasis:
        """Spectral basis from ``numerics.basis``; ``orders`` override n_q, n_p, n_z."""
        cfg = self.config.numerics.basis
        sizes = {"n_q": cfg.n_q, "n_p": cfg.n_p, "n_z": cfg.n_z, **orders}
        return build_basis(
            model,
            quadrature_points=cfg.quadrature_points,
            max_dim=self.config.budget.spectral_dim,
            **sizes,
        )

    def init_state(self, model: GleModel) -> State | None:
        """The configured point initial state, or None for random initial laws."""
        numerics = self.config.numerics
        if numerics.init is not InitKind.POINT:
            return None
        point = numerics.init_point or {}
        return _point_state(model, point)

    @contextmanager
    def timed(self, stage: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timing[stage] = self.timing.get(stage, 0.0) + time.perf_counter() - start

    def report_progress(self, stage: str, done: int, total: int) -> None:
        if self.progress:
            self.progress(stage, done, total)


def _point_state(model: GleModel, point: dict[str, list[float]]) -> State:
    unknown = set(point) - {"q", "p", "z"}
    if unknown:
        raise ConfigError(
            f"Unknown key '{sorted(unknown)[0]}' in numerics.init_point (expected q, p, z)",
            details={"path": "numerics.init_point"},
        )
    d, m = model.d, model.m
    q = np.asarray(point.get("q", [math.pi if model.is_torus else 0.0] * d), dtype=float)
    p = np.asarray(point.get("p", [0.0] * d), dtype=float)
    z = np.asarray(point.get("z", [0.0] * (m * d)), dtype=float)
    if q.size != d or p.size != d or z.size != m * d:
        raise ConfigError(
            f"numerics.init_point needs q, p of length {d} and z of length {m * d}",
            details={"path": "numerics.init_point"},
        )
    return State(q, p, z.reshape(m, d))


def new_report(kind: str, ctx: RunContext, model: GleModel | None = None, **parameters: Any) -> ExperimentReport:
    """Empty report stamped with provenance (config hash, seed, model fingerprint)."""
    return ExperimentReport(
        kind=kind,
        model_fingerprint=model.fingerprint if model is not None else "",
        config_hash=config_hash(effective_config(ctx.config)),
        seed=ctx.seed,
        parameters=parameters,
    )


@contextmanager
def leg(report: ExperimentReport, name: str) -> Iterator[None]:
    """Run one leg; a GleLabError becomes a FAIL verdict instead of aborting the run.

    Budget and configuration errors are not per-leg failures and propagate.
    """
    try:
        yield
    except (BudgetError, ConfigError):
        raise
    except GleLabError as e:
        logger.error(f"Leg '{name}' failed [{e.code}]: {e}")
        record_failure(report, name, e)


def record_failure(report: ExperimentReport, name: str, error: GleLabError) -> None:
    report.failures.append({"leg": name, **error.to_dict()})
    report.add_verdict(
        criterion=name,
        quantity="leg",
        value=None,
        target="completes",
        passed=False,
        detail=f"[{error.code}] {error}",
    )


def run_legs(
    items: Sequence[T],
    fn: Callable[[T], Any],
    workers: int = 1,
    on_done: Callable[[int, int], None] | None = None,
) -> list[Any]:
    """Run ``fn`` over items on a thread pool; results come back in item order.

    A leg that raises a GleLabError yields the exception object in its slot.
    Budget and configuration errors are re-raised.
    """
    results: list[Any] = [None] * len(items)
    done = 0
    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(items) or 1))) as executor:
        future_to_index = {executor.submit(fn, item): i for i, item in enumerate(items)}
        for future in as_completed(future_to_index):
            i = future_to_index[future]
            try:
                results[i] = future.result()
            except (BudgetError, ConfigError):
                raise
            except GleLabError as e:
                results[i] = e
            done += 1
            if on_done:
                on_done(done, len(items))
    return results


# ============================================================================
# Verdict helpers
# ============================================================================


def sigma(estimate: EstimateWithCI) -> float:
    """Standard error implied by a 95% interval."""
    return estimate.half_width / CI_Z


def joint_z(a: EstimateWithCI, b: EstimateWithCI) -> float:
    """|a - b| in units of the combined standard error (inf when both are exact and differ)."""
    diff = abs(a.value - b.value)
    scale = math.hypot(sigma(a), sigma(b))
    if scale == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / scale


def relative_gap(value: float, reference: float) -> float:
    return abs(value - reference) / max(abs(reference), 1e-300)


def series_from(**columns: Any) -> dict[str, list[float]]:
    return {name: [float(x) for x in np.ravel(values)] for name, values in columns.items()}


def merge_report(target: ExperimentReport, part: ExperimentReport, prefix: str = "") -> None:
    """Fold a per-leg report into ``target``, with ``prefix/`` on every key when given."""

    def key(name: str) -> str:
        return f"{prefix}/{name}" if prefix else name

    for name, estimate in part.estimates.items():
        target.estimates[key(name)] = estimate
    for name, value in part.values.items():
        target.values[key(name)] = value
    for name, series in part.series.items():
        target.series[key(name)] = series
    for verdict in part.verdicts:
        target.verdicts.append(verdict.model_copy(update={"criterion": key(verdict.criterion)}))
    for failure in part.failures:
        target.failures.append({**failure, "leg": key(failure.get("leg", ""))})
