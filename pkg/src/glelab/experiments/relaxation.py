"""Relaxation to equilibrium from an off-equilibrium start.

Replicas start from the configured initial law (a point mass by default in
the shipped configs). At about ``n_records`` stored times the pipeline
estimates the relative entropy, Fisher information and L1 distance of a
chosen marginal to its Gibbs marginal (the full (q, p, z) state by
default), fits an exponential to the entropy, and tracks observable
deviations |E g(x_t) - rho(g)| for g = p^2 and V. For d = 1 the p^2 decay
rate must not undercut the spectral gap of L (checked against one basis
refinement), and from a point start it is compared with the rate of
(exp(-tL) p^2)(x0) on the same times.
"""

import numpy as np
from pydantic import Field

from ..core.errors import EstimationError
from ..core.logging import get_logger
from ..core.models import ExperimentReport, InitKind
from ..dynamics.simulate import n_steps_for, simulate_paths
from ..estimators.decay import fit_exponential_decay
from ..gle.model import GleModel
from ..sampling.divergence import Binning, DivergenceReport, divergence_report
from ..sampling.gibbs import position_marginal
from ..spectral.basis import evaluate_expansion
from ..spectral.operators import assemble_generator
from ..spectral.solvers import semigroup_path, spectral_gap
from .base import CI_Z, PipelineParams, RunContext, leg, new_report, run_legs, series_from
from .registry import register_experiment

logger = get_logger(__name__)


class RelaxationParams(PipelineParams):
    coords: list[str] = Field(default_factory=lambda: ["q0", "p0", "z0_0"])
    bins: int = 8
    ranges: list[tuple[float, float]] | None = None
    n_records: int = 20
    n_boot: int = 200
    min_r2: float = 0.9
    spectral: bool = True
    agreement_sigmas: float = 2.0
    observable_sigmas: float = 2.0


def equilibrium_means(model: GleModel) -> dict[str, float]:
    """rho(p^2) per coordinate summed over d, and rho(V)."""
    marginal = position_marginal(model)
    return {
        "p2": model.d / model.beta,
        "V": model.d * marginal.mean(model.potential.profile),
    }


def _observables(model: GleModel, q: np.ndarray, p: np.ndarray) -> dict[str, np.ndarray]:
    """Per-replica observable values, shape (R, T)."""
    return {"p2": np.sum(p**2, axis=-1), "V": model.potential.value(q)}


def run_relaxation(ctx: RunContext) -> ExperimentReport:
    """Entropy, Fisher and L1 series with monotonicity, decay-fit and Pinsker verdicts.

    A Gibbs start gets a flat-series verdict instead of the decay verdicts.
    """
    params = ctx.parse_params(RelaxationParams)
    model = ctx.model()
    numerics = ctx.config.numerics
    n_steps = n_steps_for(numerics.horizon, numerics.dt)
    stride = max(1, n_steps // params.n_records)
    binning = Binning(
        coords=tuple(params.coords),
        bins=params.bins,
        ranges=tuple(tuple(r) for r in params.ranges) if params.ranges else None,
    )
    gibbs_start = numerics.init is InitKind.GIBBS
    report = new_report(
        "relaxation",
        ctx,
        model,
        init=numerics.init.value,
        init_point=numerics.init_point,
        coords=params.coords,
        bins=params.bins,
        horizon=numerics.horizon,
        dt=numerics.dt,
        stride=stride,
        replicas=numerics.replicas,
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
            stride=stride,
            workers=ctx.workers,
            **ctx.budget_kwargs(),
        )
    if paths is None:
        return report

    with ctx.timed("divergence"):
        records = run_legs(
            list(range(len(paths.times))),
            lambda k: divergence_report(paths.at(k), model, binning, ctx.seed, params.n_boot),
            workers=ctx.workers,
            on_done=lambda done, total: ctx.report_progress("divergence", done, total),
        )
    kept = [(t, r) for t, r in zip(paths.times, records) if isinstance(r, DivergenceReport)]
    for t, r in zip(paths.times, records):
        if not isinstance(r, DivergenceReport):
            report.failures.append({"leg": f"divergence@t={t:g}", **r.to_dict()})
    if not kept:
        report.add_verdict(
            "entropy_series", "recorded times", 0, ">= 1 estimable record", False,
            detail=report.failures[-1]["message"] if report.failures else "",
        )
        return report

    t = np.array([k[0] for k in kept])
    H = np.array([k[1].entropy.value for k in kept])
    H_lo = np.array([k[1].entropy.lo for k in kept])
    H_hi = np.array([k[1].entropy.hi for k in kept])
    report.series["entropy"] = series_from(
        t=t,
        H=H,
        H_lo=H_lo,
        H_hi=H_hi,
        I=[k[1].fisher.value for k in kept],
        L1=[k[1].l1 for k in kept],
    )

    pinsker = [k[1].pinsker_ok for k in kept]
    report.add_verdict(
        "pinsker",
        "0.5 L1^2 <= H_hi + slack",
        float(sum(not ok for ok in pinsker)),
        "holds at every recorded time",
        all(pinsker),
    )

    if gibbs_start:
        _flat_verdict(report, t, H, H_lo, H_hi)
    else:
        _decay_verdicts(report, params, t, H, H_lo, H_hi)

    _observable_decay(ctx, report, params, model, paths, gibbs_start)
    return report


def _flat_verdict(report, t, H, H_lo, H_hi) -> None:
    slope = float(np.polyfit(t, H, 1)[0]) if len(t) > 1 else 0.0
    drift = abs(slope) * float(t[-1] - t[0])
    width = float(np.max(H_hi - H_lo))
    report.add_verdict(
        "gibbs_flat",
        "entropy trend over the run",
        drift,
        f"<= widest CI ({width:.3g})",
        drift <= width,
    )


def _decay_verdicts(report, params: RelaxationParams, t, H, H_lo, H_hi) -> None:
    violations = [
        f"t={t[k + 1]:.3g}" for k in range(len(t) - 1) if H_lo[k + 1] > H_hi[k]
    ]
    report.add_verdict(
        "entropy_monotone",
        "H_lo(t_{k+1}) <= H_hi(t_k)",
        float(len(violations)),
        "no increase beyond the bootstrap CI",
        not violations,
        detail=", ".join(violations[:5]),
    )

    with leg(report, "entropy_decay_fit"):
        significant = H_lo > 0
        if significant.sum() < 6:
            raise EstimationError(
                f"only {int(significant.sum())} entropy values are significantly positive",
                code="too_few_points",
            )
        fit = fit_exponential_decay(
            t[significant], H[significant], sigma=(H_hi - H_lo)[significant] / (2 * CI_Z)
        )
        report.estimates["entropy_rate"] = fit.rate
        report.values["entropy_fit_r2"] = fit.r2
        report.add_verdict(
            "entropy_decay_fit",
            "R^2 and rate of log-linear fit",
            fit.r2,
            f"R^2 >= {params.min_r2:g} and rate > 0",
            fit.r2 >= params.min_r2 and fit.rate.value > 0,
            detail=f"rate={fit.rate.value:.4g} [{fit.rate.lo:.4g}, {fit.rate.hi:.4g}]",
        )


def _observable_decay(ctx, report, params: RelaxationParams, model, paths, gibbs_start) -> None:
    fitted: dict[str, np.ndarray] = {}
    with leg(report, "observables"):
        targets = equilibrium_means(model)
        values = _observables(model, paths.q, paths.p)
        R = paths.n_replicas
        columns: dict[str, np.ndarray] = {"t": paths.times}
        for name, g in values.items():
            deviation = np.abs(g.mean(axis=0) - targets[name])
            se = g.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros_like(deviation)
            columns[f"dev_{name}"] = deviation
            columns[f"se_{name}"] = se
            if gibbs_start:
                continue
            usable = deviation > params.observable_sigmas * se
            if usable.sum() < 6:
                report.values[f"decay_{name}"] = "unresolved"
                continue
            fit = fit_exponential_decay(paths.times[usable], deviation[usable], sigma=se[usable])
            report.estimates[f"decay_rate_{name}"] = fit.rate
            fitted[name] = usable
        report.series["observables"] = series_from(**columns)

    if gibbs_start or not params.spectral or model.d != 1:
        return
    gap = fine = None
    with leg(report, "spectral_gap"), ctx.timed("spectral"):
        basis = ctx.basis(model)
        fine = assemble_generator(
            model, ctx.basis(model, n_q=basis.n_q + 2, n_p=basis.n_p + 2, n_z=basis.n_z + 1)
        )
        gap = spectral_gap(assemble_generator(model, basis), refined=fine)
        report.values["spectral_gap"] = gap.gap
        report.values["spectral_gap_method"] = gap.method
        report.values["spectral_gap_change"] = gap.relative_change
    rate = report.estimates.get("decay_rate_p2")
    if gap is None or rate is None:
        return
    se = rate.half_width / CI_Z
    report.add_verdict(
        "observable_rate_vs_gap",
        "p^2 decay rate vs spectral gap",
        rate.value,
        f">= gap {gap.gap:.4g} - {params.agreement_sigmas:g} SE",
        rate.value >= gap.gap - params.agreement_sigmas * se,
        detail=f"se={se:.3g}",
    )

    x0 = ctx.init_state(model)
    if x0 is None:
        return
    with leg(report, "semigroup_prediction"), ctx.timed("spectral"):
        usable = fitted["p2"]
        predicted = _semigroup_deviation(fine, x0, paths.times, equilibrium_means(model)["p2"])
        report.series["semigroup_p2"] = series_from(t=paths.times, dev_p2=predicted)
        fit = fit_exponential_decay(paths.times[usable], predicted[usable])
        report.estimates["semigroup_rate_p2"] = fit.rate
        z = abs(rate.value - fit.rate.value) / se if se > 0 else float("inf")
        report.add_verdict(
            "observable_rate_vs_semigroup",
            "p^2 decay rate vs exp(-tL) p^2 at the start point",
            rate.value,
            f"{fit.rate.value:.4g} within {params.agreement_sigmas:g} SE",
            z <= params.agreement_sigmas,
            detail=f"z={z:.3g}",
        )


def _semigroup_deviation(L, x0, times: np.ndarray, mean: float) -> np.ndarray:
    """|(exp(-tL) p^2)(x0) - rho(p^2)| on the refined basis."""
    basis = L.basis
    path = semigroup_path(L, basis.momentum_squared(), times)
    z = x0.z.reshape(1, basis.m)
    values = np.array([evaluate_expansion(basis, u, x0.q, x0.p, z)[0] for u in path])
    return np.abs(values - mean)


register_experiment("relaxation", run_relaxation)
