"""Plain simulation run: replica paths, exported columns and sanity verdicts."""

import numpy as np

from ..core.logging import get_logger
from ..core.models import ExperimentReport, InitKind
from ..dynamics.simulate import export_trajectories, simulate_paths
from .base import PipelineParams, RunContext, leg, new_report, series_from
from .registry import register_experiment

logger = get_logger(__name__)

TRAJECTORY_FILENAME = "trajectories.csv"


class SimulateParams(PipelineParams):
    export: bool = True
    export_stride: int = 1
    moment_sigmas: float = 4.0


def run_simulate(ctx: RunContext) -> ExperimentReport:
    """Simulate ``numerics.replicas`` paths of the configured model.

    Verdicts: all states finite; with a Gibbs start, E|p|^2 / d at the final
    time matches 1/beta within ``moment_sigmas`` standard errors.
    """
    params = ctx.parse_params(SimulateParams)
    model = ctx.model()
    numerics = ctx.config.numerics
    report = new_report(
        "simulate",
        ctx,
        model,
        scheme=numerics.scheme.value,
        dt=numerics.dt,
        horizon=numerics.horizon,
        replicas=numerics.replicas,
        stride=numerics.stride,
        init=numerics.init.value,
    )

    paths = None
    with leg(report, "simulation"), ctx.timed("simulate"):
        paths = simulate_paths(
            model,
            numerics.scheme,
            numerics.horizon,
            numerics.replicas,
            ctx.seed,
            numerics.init,
            dt=numerics.dt,
            init_state=ctx.init_state(model),
            stride=numerics.stride,
            workers=ctx.workers,
            progress_callback=lambda done, total: ctx.report_progress("simulate", done, total),
            **ctx.budget_kwargs(),
        )
    if paths is None:
        return report

    finite = bool(np.all(np.isfinite(paths.p)) and np.all(np.isfinite(paths.z)))
    report.add_verdict("finite_paths", "all states", None, "finite", finite)

    p2 = np.sum(paths.p**2, axis=-1) / model.d
    z2 = np.sum(paths.z**2, axis=(-2, -1)) / (model.d * model.m)
    energy = model.potential.value(paths.q)
    report.series["moments"] = series_from(
        t=paths.times,
        mean_p2=p2.mean(axis=0),
        mean_z2=z2.mean(axis=0),
        mean_V=energy.mean(axis=0),
    )
    report.values["noise_fingerprint"] = paths.noise_fingerprint

    if numerics.init is InitKind.GIBBS and paths.n_replicas > 1:
        final = p2[:, -1]
        target = 1.0 / model.beta
        se = float(final.std(ddof=1) / np.sqrt(len(final)))
        report.values["final_mean_p2"] = float(final.mean())
        report.add_verdict(
            "gibbs_kinetic_moment",
            "E|p|^2/d at final time",
            float(final.mean()),
            f"1/beta = {target:.6g} within {params.moment_sigmas:g} SE",
            abs(final.mean() - target) <= params.moment_sigmas * se,
            detail=f"SE={se:.3g}",
        )

    if params.export and ctx.out_dir is not None:
        with ctx.timed("export"):
            export_trajectories(
                paths,
                ctx.out_dir / TRAJECTORY_FILENAME,
                meta={"config_hash": report.config_hash},
                stride=params.export_stride,
            )
    return report


register_experiment("simulate", run_simulate)
