"""Fast structural invariant suite.

Every check is exact or near-exact and runs in seconds: fluctuation-
dissipation of the embedding, the commutator table, the friction formula
and closed-form Green-Kubo for random kernels, the free-particle Poisson
solution, the L = B + A*A structure of the assembled generator, constant
preservation by the semigroup, and Gibbs stationarity under both
integrators.
"""

import math

import numpy as np

from ..core.logging import get_logger
from ..core.models import ExperimentReport, InitKind, SchemeKind
from ..core.seeding import Stream, rng_for
from ..dynamics.simulate import rescale_whitenoise, simulate_paths
from ..estimators.diffusion import green_kubo
from ..gle.model import GleModel, canonical_embedding, check_fdt, kernel_mass
from ..gle.potentials import build_potential
from ..spectral.basis import build_basis
from ..spectral.operators import (
    assemble_dissipation,
    assemble_generator,
    derivative_family,
    family_norm,
    structure_residuals,
)
from ..spectral.solvers import diffusion_from_poisson, semigroup_apply, solve_poisson
from ..spectral.symbolic import commutator_table
from .base import PipelineParams, RunContext, leg, new_report
from .registry import register_experiment

logger = get_logger(__name__)

EXACT_TOL = 1e-12


class CheckParams(PipelineParams):
    random_kernels: int = 10
    random_vectors: int = 50
    stationarity_replicas: int = 256
    stationarity_horizon: float = 1.0
    stationarity_dt: float = 0.01
    moment_sigmas: float = 4.0


def _free_model(lam=(1.0,), alpha=(1.0,), beta: float = 1.0) -> GleModel:
    return GleModel(lam=lam, alpha=alpha, beta=beta, potential=build_potential({"kind": "zero"}))


def _spectral_model(model: GleModel) -> GleModel:
    """The run's model when the spectral code supports it, else the default cosine model."""
    if model.d == 1 and model.m <= 2:
        return model
    return GleModel(lam=(1.0,), alpha=(1.0,), beta=1.0, potential=build_potential({"kind": "cosine"}))


def _check_fdt(report: ExperimentReport, model: GleModel) -> None:
    with leg(report, "fdt"):
        A, C = canonical_embedding(model)
        fdt = check_fdt(A, C, model.beta)
        report.add_verdict(
            "fdt", "||C C^T - (A + A^T)/beta||_F", fdt.residual, f"<= {fdt.tolerance:.3g}", fdt.passed
        )


def _check_commutators(report: ExperimentReport) -> None:
    checks = commutator_table()
    failed = [c.name for c in checks if not c.holds]
    report.add_verdict(
        "commutators",
        "symbolic identities",
        float(len(checks) - len(failed)),
        f"all {len(checks)} hold",
        not failed,
        detail=", ".join(failed),
    )


def _check_friction(report: ExperimentReport, params: CheckParams, seed: int) -> None:
    rng = rng_for(seed, 0, Stream.SPECTRAL)
    worst_mass = worst_gk = worst_scaling = 0.0
    for _ in range(params.random_kernels):
        m = int(rng.integers(1, 4))
        lam = tuple(rng.uniform(0.5, 2.0, m))
        alpha = tuple(rng.uniform(0.5, 4.0, m))
        beta = float(rng.uniform(0.5, 2.0))
        model = _free_model(lam, alpha, beta)
        gamma = kernel_mass(model)
        closed = math.fsum(x**2 / a for x, a in zip(lam, alpha))
        worst_mass = max(worst_mass, abs(gamma - closed) / closed)
        D = green_kubo(model=model, analytic=True).value
        worst_gk = max(worst_gk, abs(beta * D * gamma - 1.0))
        scaled = kernel_mass(rescale_whitenoise(model, 0.1))
        worst_scaling = max(worst_scaling, abs(scaled - gamma) / gamma)
    n = params.random_kernels
    report.add_verdict(
        "friction_formula", "kernel mass vs sum lambda^2/alpha", worst_mass,
        f"<= {EXACT_TOL:g} over {n} kernels", worst_mass <= EXACT_TOL,
    )
    report.add_verdict(
        "green_kubo_analytic", "|beta D gamma - 1|", worst_gk,
        f"<= {EXACT_TOL:g} over {n} kernels", worst_gk <= EXACT_TOL,
    )
    report.add_verdict(
        "rescaling_preserves_friction", "kernel mass after eps = 0.1 rescaling", worst_scaling,
        f"<= {EXACT_TOL:g}", worst_scaling <= EXACT_TOL,
    )


def _check_free_poisson(report: ExperimentReport) -> None:
    with leg(report, "free_poisson"):
        model = _free_model()
        basis = build_basis(model, 2, 4, 4)
        solution = solve_poisson(assemble_generator(model, basis), rtol=1e-12)
        D = diffusion_from_poisson(solution, model).D
        exact = green_kubo(model=model, analytic=True).value
        gap = abs(D - exact) / exact
        report.values["free_poisson_D"] = D
        report.add_verdict(
            "free_poisson", "D_poisson vs closed form", gap, "<= 1e-08", gap <= 1e-8
        )


def _check_structure(report: ExperimentReport, params: CheckParams, model: GleModel, seed: int) -> None:
    with leg(report, "structure"):
        basis = build_basis(model, 4, 6, 4)
        residuals = structure_residuals(model, basis)
        report.values["structure"] = residuals
        report.add_verdict(
            "transport_antisymmetric", "||B + B^T|| / ||B||", residuals["antisymmetry"],
            "<= 1e-12", residuals["antisymmetry"] <= EXACT_TOL,
        )
        report.add_verdict(
            "dissipation_symmetric", "||A*A - (A*A)^T||", residuals["dissipation_symmetry"],
            "<= 1e-12", residuals["dissipation_symmetry"] <= EXACT_TOL,
        )
        constants = max(residuals["constant_column"], residuals["constant_row"])
        report.add_verdict(
            "constants_in_kernel", "max |L e_0|, |L^T e_0|", constants, "<= 1e-12", constants <= EXACT_TOL
        )

        L = assemble_generator(model, basis)
        S = assemble_dissipation(model, basis)
        A = derivative_family(model, basis)["A"]
        rng = rng_for(seed, 1, Stream.SPECTRAL)
        worst = 0.0
        negative = False
        for _ in range(params.random_vectors):
            u = rng.standard_normal(basis.dim)
            energy = float(u @ (L @ u))
            norm_A = family_norm(A, u) ** 2
            negative |= norm_A < 0 or float(u @ (S @ u)) < -EXACT_TOL * norm_A
            worst = max(worst, abs(energy - norm_A) / max(1.0, norm_A))
        report.add_verdict(
            "dissipation_identity", "<Lu, u> vs ||Au||^2", worst,
            f"<= 1e-10 on {params.random_vectors} random vectors", worst <= 1e-10 and not negative,
        )

        constant = semigroup_apply(L, basis.constant(), 0.5)
        drift = float(np.max(np.abs(constant - basis.constant())))
        report.add_verdict(
            "semigroup_constants", "|exp(-tL) 1 - 1|", drift, "<= 1e-10", drift <= 1e-10
        )
        u = rng.standard_normal(basis.dim)
        mean_gap = abs(float(semigroup_apply(L, u, 0.5)[0]) - float(u[0]))
        report.add_verdict(
            "semigroup_mean", "|rho(exp(-tL) u) - rho(u)|", mean_gap, "<= 1e-8", mean_gap <= 1e-8
        )


def _check_stationarity(
    report: ExperimentReport, params: CheckParams, model: GleModel, ctx: RunContext
) -> None:
    target = 1.0 / model.beta
    for scheme in (SchemeKind.OU_SPLITTING, SchemeKind.EULER_MARUYAMA):
        with leg(report, f"stationarity_{scheme.value}"):
            paths = simulate_paths(
                model,
                scheme,
                params.stationarity_horizon,
                params.stationarity_replicas,
                ctx.seed,
                InitKind.GIBBS,
                dt=params.stationarity_dt,
                workers=ctx.workers,
                **ctx.budget_kwargs(),
            )
            for name, values in (
                ("p", np.mean(paths.p[:, -1] ** 2, axis=-1)),
                ("z", np.mean(paths.z[:, -1] ** 2, axis=(-2, -1))),
            ):
                se = float(values.std(ddof=1) / math.sqrt(len(values)))
                mean = float(values.mean())
                report.add_verdict(
                    f"gibbs_stationary_{scheme.value}",
                    f"E {name}^2 at t = {params.stationarity_horizon:g}",
                    mean,
                    f"1/beta = {target:.6g} within {params.moment_sigmas:g} SE",
                    abs(mean - target) <= params.moment_sigmas * se,
                    detail=f"SE={se:.3g}",
                )


def run_check(ctx: RunContext) -> ExperimentReport:
    params = ctx.parse_params(CheckParams)
    model = ctx.model()
    report = new_report("check", ctx, model, random_kernels=params.random_kernels)
    with ctx.timed("fdt"):
        _check_fdt(report, model)
    with ctx.timed("commutators"):
        _check_commutators(report)
    with ctx.timed("friction"):
        _check_friction(report, params, ctx.seed)
    with ctx.timed("free_poisson"):
        _check_free_poisson(report)
    with ctx.timed("structure"):
        _check_structure(report, params, _spectral_model(model), ctx.seed)
    with ctx.timed("stationarity"):
        _check_stationarity(report, params, model, ctx)
    return report


register_experiment("check", run_check)
