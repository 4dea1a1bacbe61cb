"""White-noise limit: coupled strong errors of the rescaled system against Langevin.

For each epsilon the rescaled extended system (lambda / sqrt(eps),
alpha / eps) and the limiting Langevin equation with friction
gamma = sum lambda^2 / alpha are driven by the same Brownian motions and
start from the same (q, p). The sup-in-time discrepancy must shrink with
epsilon.
"""

import math

import numpy as np
from pydantic import Field, field_validator

from ..core.errors import ExperimentError
from ..core.logging import get_logger
from ..core.models import ExperimentReport, SchemeKind
from ..dynamics.integrators import EM_STIFFNESS_LIMIT
from ..dynamics.noise import brownian_paths
from ..dynamics.simulate import (
    check_budget,
    limit_noise,
    n_steps_for,
    rescale_whitenoise,
    simulate_langevin,
    simulate_paths,
)
from ..estimators.strong import strong_error
from ..gle.model import GleModel, kernel_mass
from .base import PipelineParams, RunContext, new_report, record_failure, run_legs, series_from
from .registry import register_experiment

logger = get_logger(__name__)

MIN_EPSILONS = 3


class WhitenoiseParams(PipelineParams):
    epsilons: list[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025, 0.0125])
    horizon: float = 1.0
    r_values: list[float] = Field(default_factory=lambda: [2.0, 4.0])
    order_range: tuple[float, float] = (0.3, 0.7)
    n_boot: int = 200

    @field_validator("epsilons")
    @classmethod
    def sort_epsilons(cls, v: list[float]) -> list[float]:
        return sorted(v, reverse=True)


def coupled_step(model: GleModel, epsilons: list[float], dt: float, horizon: float) -> float:
    """Largest dt <= ``dt`` dividing the horizon and stable for every rescaled model."""
    cap = EM_STIFFNESS_LIMIT * min(epsilons) / float(np.max(model.alpha_array))
    n = math.ceil(horizon / min(dt, cap) - 1e-9)
    return horizon / n


def _fitted_order(epsilons: list[float], errors: list[float]) -> float:
    return float(np.polyfit(np.log(epsilons), np.log(errors), 1)[0])


def run_whitenoise(ctx: RunContext) -> ExperimentReport:
    """Strong errors for r in ``r_values`` over the epsilon ladder.

    Verdicts: the friction formula, errors (r = 2) strictly decreasing in
    epsilon, and the fitted order of the root-mean-square sup error in q
    inside ``order_range``.

    Raises:
        ExperimentError: Fewer than three epsilon values
    """
    params = ctx.parse_params(WhitenoiseParams)
    if len(params.epsilons) < MIN_EPSILONS:
        raise ExperimentError(
            f"need ≥ {MIN_EPSILONS} epsilon values (got {len(params.epsilons)})",
            code="too_few_epsilons",
        )
    model = ctx.model()
    numerics = ctx.config.numerics
    dt = coupled_step(model, params.epsilons, numerics.dt, params.horizon)
    gamma = kernel_mass(model)
    report = new_report(
        "whitenoise",
        ctx,
        model,
        epsilons=params.epsilons,
        horizon=params.horizon,
        dt=dt,
        replicas=numerics.replicas,
        r_values=params.r_values,
        scheme=SchemeKind.EULER_MARUYAMA.value,
    )

    closed_form = math.fsum(lam**2 / a for lam, a in zip(model.lam, model.alpha))
    report.values["gamma"] = gamma
    report.add_verdict(
        "friction_formula",
        "kernel mass",
        gamma,
        f"sum lambda^2/alpha = {closed_form:.12g}",
        abs(gamma - closed_form) <= 1e-12 * max(1.0, closed_form),
    )
    init_state = ctx.init_state(model)

    n_steps = n_steps_for(params.horizon, dt)
    check_budget(n_steps, numerics.replicas, **ctx.budget_kwargs())

    def run_epsilon(eps: float) -> dict:
        scaled = rescale_whitenoise(model, eps)
        with ctx.timed("simulate"):
            noise = brownian_paths(
                ctx.seed, range(numerics.replicas), n_steps, scaled.m, scaled.d, dt
            )
            gle = simulate_paths(
                scaled,
                SchemeKind.EULER_MARUYAMA,
                params.horizon,
                numerics.replicas,
                ctx.seed,
                numerics.init,
                dt=dt,
                init_state=init_state,
                stride=numerics.stride,
                noise=noise,
                **ctx.budget_kwargs(),
            )
            limit = simulate_langevin(
                gamma,
                model.beta,
                model.potential,
                SchemeKind.EULER_MARUYAMA,
                params.horizon,
                limit_noise(scaled, gamma, noise),
                init_batch=gle.at(0),
                stride=numerics.stride,
                **ctx.budget_kwargs(),
            )
        with ctx.timed("estimate"):
            errors = {
                r: strong_error(gle, limit, r, seed=ctx.seed, n_boot=params.n_boot)
                for r in params.r_values
            }
            q_only = strong_error(
                gle, limit, 2.0, seed=ctx.seed, n_boot=params.n_boot, components=("q",)
            )
        return {"errors": errors, "q_only": q_only, "limit_gamma": limit.metadata["gamma"]}

    results = run_legs(
        params.epsilons,
        run_epsilon,
        workers=ctx.workers,
        on_done=lambda done, total: ctx.report_progress("whitenoise", done, total),
    )

    completed: list[tuple[float, dict]] = []
    for eps, result in zip(params.epsilons, results):
        if isinstance(result, Exception):
            record_failure(report, f"eps={eps:g}", result)
            continue
        completed.append((eps, result))
        for r, estimate in result["errors"].items():
            report.estimates[f"strong_r{r:g}/eps={eps:g}"] = estimate
        report.estimates[f"strong_q_r2/eps={eps:g}"] = result["q_only"]

    if completed:
        limit_gamma = completed[0][1]["limit_gamma"]
        report.add_verdict(
            "limit_friction",
            "Langevin gamma",
            limit_gamma,
            f"kernel mass = {gamma:.12g}",
            abs(limit_gamma - gamma) <= 1e-12 * max(1.0, gamma),
        )
    if len(completed) < MIN_EPSILONS:
        report.add_verdict(
            "strong_order",
            "completed epsilon legs",
            len(completed),
            f">= {MIN_EPSILONS}",
            False,
            detail="too few epsilon legs completed to fit an order",
        )
        return report

    eps = [e for e, _ in completed]
    columns: dict[str, list[float]] = {"eps": eps}
    for r in params.r_values:
        errs = [res["errors"][r].value for _, res in completed]
        columns[f"err_r{r:g}"] = errs
        if min(errs) > 0:
            report.values[f"order_r{r:g}"] = _fitted_order(eps, errs)
    rms_q = [math.sqrt(res["q_only"].value) for _, res in completed]
    columns["rms_q"] = rms_q
    report.series["strong_error"] = series_from(**columns)

    main = [res["errors"][params.r_values[0]].value for _, res in completed]
    decreasing = all(b < a for a, b in zip(main, main[1:]))
    report.add_verdict(
        "strong_error_decreasing",
        f"E sup (|dq|^{params.r_values[0]:g} + |dp|^{params.r_values[0]:g})",
        main[-1],
        "strictly decreasing as epsilon decreases",
        decreasing,
        detail=", ".join(f"{e:g}: {v:.4g}" for e, v in zip(eps, main)),
    )

    lo, hi = params.order_range
    if min(rms_q) > 0:
        order = _fitted_order(eps, rms_q)
        report.values["order_rms_q"] = order
        report.add_verdict(
            "strong_order",
            "log-log slope of (E sup|dq|^2)^(1/2) vs epsilon",
            order,
            f"in [{lo:g}, {hi:g}]",
            lo <= order <= hi,
        )
    else:
        report.add_verdict(
            "strong_order", "rms q error", 0.0, "positive errors", False,
            detail="zero discrepancy; the paths are identical",
        )
    return report


register_experiment("whitenoise", run_whitenoise)
