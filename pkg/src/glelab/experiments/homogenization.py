"""Effective diffusion on the torus by three independent routes.

For each parameter point the pipeline simulates stationary paths, estimates
D from the mean squared displacement and from Green-Kubo, and for d = 1
solves the Poisson equation L phi = p spectrally (plus the martingale
estimator built on phi). The free particle also gets the closed form.
"""

from typing import Any

import numpy as np
from pydantic import Field

from ..core.errors import ExperimentError
from ..core.logging import get_logger
from ..core.models import EstimateWithCI, ExperimentReport, InitKind
from ..dynamics.simulate import simulate_paths
from ..estimators.diffusion import (
    autocorrelation,
    green_kubo,
    martingale_diffusion,
    msd_curve,
    msd_diffusion,
)
from ..gle.model import GleModel, is_free
from ..spectral.operators import assemble_generator
from ..spectral.solvers import diffusion_from_poisson, solve_poisson
from .base import (
    PipelineParams,
    RunContext,
    joint_z,
    leg,
    merge_report,
    new_report,
    record_failure,
    relative_gap,
    run_legs,
    series_from,
)
from .registry import register_experiment

logger = get_logger(__name__)


class ParameterPoint(PipelineParams):
    """Model overrides for one point of a sweep."""

    lambda_: list[float] | None = Field(default=None, alias="lambda")
    alpha: list[float] | None = None
    beta: float | None = None


class HomogenizationParams(PipelineParams):
    sweep: list[ParameterPoint] = Field(default_factory=list)
    msd_window: tuple[float, float] | None = None
    gk_max_lag: float | None = None
    n_boot: int = 200
    spectral: bool = True
    mc_tolerance: float = 0.10
    free_tolerance: float = 0.05
    poisson_tolerance: float = 1e-8
    agreement_sigmas: float = 2.0


def diffusion_bound(model: GleModel) -> float:
    """(4 / beta) sum alpha_j / lambda_j^2."""
    return (4.0 / model.beta) * float(np.sum(model.alpha_array / model.lam_array**2))


def _point_model(base: GleModel, point: ParameterPoint) -> GleModel:
    changes: dict[str, Any] = {}
    if point.lambda_ is not None:
        changes["lam"] = tuple(point.lambda_)
    if point.alpha is not None:
        changes["alpha"] = tuple(point.alpha)
    if point.beta is not None:
        changes["beta"] = point.beta
    return base.with_params(**changes) if changes else base


def _homogenize_point(
    ctx: RunContext, model: GleModel, params: HomogenizationParams, workers: int
) -> ExperimentReport:
    numerics = ctx.config.numerics
    part = new_report("homogenization", ctx, model, **model.describe())
    free = is_free(model)
    bound = diffusion_bound(model)
    part.values["bound"] = bound
    part.values["free"] = free

    paths = None
    with leg(part, "simulation"), ctx.timed("simulate"):
        paths = simulate_paths(
            model,
            numerics.scheme,
            numerics.horizon,
            numerics.replicas,
            ctx.seed,
            InitKind.GIBBS,
            dt=numerics.dt,
            stride=numerics.stride,
            workers=workers,
            **ctx.budget_kwargs(),
        )

    solution = None
    if paths is not None:
        with ctx.timed("estimate"):
            with leg(part, "msd"):
                part.estimates["D_msd"] = msd_diffusion(
                    paths, params.msd_window, seed=ctx.seed, n_boot=params.n_boot
                )
            with leg(part, "green_kubo"):
                part.estimates["D_green_kubo"] = green_kubo(
                    paths, max_lag=params.gk_max_lag, seed=ctx.seed, n_boot=params.n_boot
                )
        lags, msd = msd_curve(paths)
        vacf = autocorrelation(paths.p).mean(axis=0)[: len(lags)]
        part.series["msd"] = series_from(t=lags, msd=msd)
        part.series["vacf"] = series_from(t=lags, vacf=vacf)

    if free:
        part.estimates["D_analytic"] = green_kubo(model=model, analytic=True)

    if params.spectral and model.d == 1:
        with leg(part, "poisson"), ctx.timed("spectral"):
            basis = ctx.basis(model)
            solution = solve_poisson(assemble_generator(model, basis))
            result = diffusion_from_poisson(solution, model)
            part.estimates["D_poisson"] = EstimateWithCI(
                value=result.D, lo=result.D, hi=result.D, method="poisson_spectral"
            )
            part.values["poisson_residual"] = solution.residual
            part.values["poisson_method"] = solution.method
            part.values["basis"] = basis.descriptor()
        if solution is not None and paths is not None:
            with leg(part, "martingale"), ctx.timed("estimate"):
                part.estimates["D_martingale"] = martingale_diffusion(
                    paths, solution, seed=ctx.seed, n_boot=params.n_boot
                )

    _verdicts(part, params, bound, free)
    return part


def _verdicts(part: ExperimentReport, params: HomogenizationParams, bound: float, free: bool) -> None:
    est = part.estimates
    for name in ("D_poisson", "D_msd", "D_green_kubo", "D_martingale"):
        if name in est:
            D = est[name].value
            part.add_verdict(
                "diffusion_bound", name, D, f"0 < D <= {bound:.6g}", 0.0 < D <= bound
            )

    if "D_msd" in est and "D_green_kubo" in est:
        a, b = est["D_msd"], est["D_green_kubo"]
        z = joint_z(a, b)
        gap = relative_gap(a.value, b.value)
        part.add_verdict(
            "msd_green_kubo_agreement",
            "D_msd vs D_green_kubo",
            gap,
            f"within {params.agreement_sigmas:g} joint SE or {params.mc_tolerance:.0%}",
            z <= params.agreement_sigmas or gap <= params.mc_tolerance,
            detail=f"z={z:.3g}",
        )

    reference = est.get("D_analytic") or est.get("D_poisson")
    if reference is not None:
        tolerance = params.free_tolerance if free else params.mc_tolerance
        for name in ("D_msd", "D_green_kubo", "D_martingale"):
            if name in est:
                gap = relative_gap(est[name].value, reference.value)
                part.add_verdict(
                    "mc_vs_reference",
                    f"{name} vs {reference.method}",
                    gap,
                    f"relative gap <= {tolerance:.0%}",
                    gap <= tolerance,
                )

    if free and "D_poisson" in est:
        gap = relative_gap(est["D_poisson"].value, est["D_analytic"].value)
        part.add_verdict(
            "poisson_exact",
            "D_poisson vs D_analytic",
            gap,
            f"relative gap <= {params.poisson_tolerance:g}",
            gap <= params.poisson_tolerance,
        )


def run_homogenization(ctx: RunContext) -> ExperimentReport:
    """Estimate D by MSD, Green-Kubo and (d = 1) the Poisson route; check agreement and the bound.

    Raises:
        ExperimentError: The model is not on the torus
    """
    params = ctx.parse_params(HomogenizationParams)
    base = ctx.model()
    if not base.is_torus:
        raise ExperimentError(
            "homogenization needs a torus model (periodic potential)", code="unsupported_model"
        )
    models = [_point_model(base, point) for point in params.sweep] or [base]
    report = new_report(
        "homogenization",
        ctx,
        base,
        points=len(models),
        scheme=ctx.config.numerics.scheme.value,
        dt=ctx.config.numerics.dt,
        horizon=ctx.config.numerics.horizon,
        replicas=ctx.config.numerics.replicas,
    )
    inner_workers = ctx.workers if len(models) == 1 else 1
    parts = run_legs(
        models,
        lambda m: _homogenize_point(ctx, m, params, inner_workers),
        workers=ctx.workers,
        on_done=lambda done, total: ctx.report_progress("homogenization", done, total),
    )
    for i, part in enumerate(parts):
        prefix = f"point{i}"
        if isinstance(part, Exception):
            record_failure(report, prefix, part)
        else:
            merge_report(report, part, prefix if len(models) > 1 else "")
    return report


register_experiment("homogenization", run_homogenization)
