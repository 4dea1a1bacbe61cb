"""Lyapunov drift condition L G + a G <= d_hat, checked on radial shells."""

from dataclasses import asdict

import numpy as np
from pydantic import Field

from ..core.errors import ConfigError
from ..core.logging import get_logger
from ..core.models import ExperimentReport
from ..sampling.lyapunov import (
    LyapunovSpec,
    fit_confining_spec,
    lyapunov_drift_check,
    lyapunov_generator,
    radial_points,
    symbolic_drift,
)
from .base import PipelineParams, RunContext, leg, new_report, series_from
from .registry import register_experiment

logger = get_logger(__name__)


class LyapunovParams(PipelineParams):
    constants: dict[str, float] = Field(default_factory=dict)
    power: int = 1
    n_points: int = 10_000
    r_min: float = 0.1
    r_max: float = 100.0
    n_shells: int = 25
    oracle_points: int = 1000
    oracle_tolerance: float = 1e-12


def _spec_for(ctx: RunContext, params: LyapunovParams) -> LyapunovSpec:
    model = ctx.model()
    known = set(LyapunovSpec.__dataclass_fields__) - {"power"}
    unknown = sorted(set(params.constants) - known)
    if unknown:
        path = f"experiment.params.constants.{unknown[0]}"
        raise ConfigError(
            f"Unknown Lyapunov constant '{unknown[0]}' (expected one of {', '.join(sorted(known))})",
            details={"path": path},
        )
    if model.is_torus:
        base = LyapunovSpec.torus_default()
    elif params.constants:
        base = LyapunovSpec(C_hat=1.0, D=0.0, M=0.0)
    else:
        base = fit_confining_spec(model)
    return LyapunovSpec(**{**asdict(base), **params.constants, "power": params.power})


def run_lyapunov(ctx: RunContext) -> ExperimentReport:
    """Drift check with the torus constants (or fitted confining ones) and a symbolic oracle."""
    params = ctx.parse_params(LyapunovParams)
    model = ctx.model()
    report = new_report("lyapunov", ctx, model, n_points=params.n_points, power=params.power)

    with leg(report, "drift_check"), ctx.timed("drift"):
        spec = _spec_for(ctx, params)
        report.values["constants"] = asdict(spec)
        q, p, r, shell = radial_points(
            model, params.n_points, params.r_min, params.r_max, params.n_shells, seed=ctx.seed
        )
        drift = lyapunov_drift_check(model, spec, (q, p, r, shell))
        report.values["drift"] = drift.to_dict()
        report.series["shells"] = series_from(
            radius=drift.shell_radii, max_drift=drift.shell_maxima
        )
        report.add_verdict(
            "lyapunov_drift",
            "sup (L G^l + a G^l)",
            drift.d_hat,
            "finite, shell maxima non-increasing beyond the fitted radius",
            drift.passed,
            detail=drift.detail,
        )

        if model.d == 1:
            try:
                oracle = symbolic_drift(spec, model)
            except NotImplementedError as e:
                report.values["symbolic_oracle"] = f"skipped ({e})"
            else:
                idx = np.linspace(0, len(q) - 1, min(params.oracle_points, len(q))).astype(int)
                closed = lyapunov_generator(spec, model, q[idx], p[idx], r[idx])
                symbolic = np.broadcast_to(
                    oracle(q[idx, 0], p[idx, 0], r[idx, 0]), closed.shape
                )
                rel = float(np.max(np.abs(closed - symbolic) / np.maximum(1.0, np.abs(symbolic))))
                report.add_verdict(
                    "symbolic_oracle",
                    "max relative gap, closed form vs sympy",
                    rel,
                    f"<= {params.oracle_tolerance:g}",
                    rel <= params.oracle_tolerance,
                )
    return report


register_experiment("lyapunov", run_lyapunov)
