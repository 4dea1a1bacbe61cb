"""Spectral Poisson solve L phi = p and the diffusion coefficient it implies."""

from ..core.logging import get_logger
from ..core.models import ExperimentReport
from ..core.storage import save_coefficients
from ..estimators.diffusion import green_kubo
from ..gle.model import is_free
from ..spectral.operators import assemble_generator, structure_residuals
from ..spectral.solvers import POISSON_RTOL, diffusion_from_poisson, solve_poisson
from .base import PipelineParams, RunContext, leg, new_report, relative_gap
from .registry import register_experiment

logger = get_logger(__name__)

GENERATOR_FILENAME = "generator.npz"
SOLUTION_FILENAME = "poisson-solution.npz"


class PoissonParams(PipelineParams):
    rtol: float = POISSON_RTOL
    preconditioner: str = "ilu"
    export: bool = True
    free_tolerance: float = 1e-8


def run_poisson(ctx: RunContext) -> ExperimentReport:
    """Solve for phi, report D with its bound and, for V = 0, the closed-form check.

    With an output directory the generator and phi are exported as .npz.
    """
    params = ctx.parse_params(PoissonParams)
    model = ctx.model()
    report = new_report(
        "poisson", ctx, model, rtol=params.rtol, preconditioner=params.preconditioner
    )

    with leg(report, "poisson"):
        with ctx.timed("assembly"):
            basis = ctx.basis(model)
            L = assemble_generator(model, basis)
            report.values["basis"] = basis.descriptor()
            report.values["structure"] = structure_residuals(model, basis)
        with ctx.timed("solve"):
            solution = solve_poisson(L, rtol=params.rtol, preconditioner=params.preconditioner)
        report.values["residual"] = solution.residual
        report.values["method"] = solution.method
        report.values["iterations"] = solution.iterations
        report.add_verdict(
            "poisson_residual",
            "relative residual",
            solution.residual,
            f"<= {params.rtol:g}",
            solution.residual <= params.rtol,
        )

        if model.is_torus:
            result = diffusion_from_poisson(solution, model)
            report.values["D"] = result.D
            report.values["D_per_mode"] = result.per_mode
            report.values["bound"] = result.bound
            report.add_verdict(
                "diffusion_bound",
                "D_poisson",
                result.D,
                f"0 < D <= {result.bound:.6g}",
                result.bound_ok,
            )
            if is_free(model):
                exact = green_kubo(model=model, analytic=True).value
                gap = relative_gap(result.D, exact)
                report.values["D_analytic"] = exact
                report.add_verdict(
                    "poisson_exact",
                    "D_poisson vs closed form",
                    gap,
                    f"relative gap <= {params.free_tolerance:g}",
                    gap <= params.free_tolerance,
                )

        if params.export and ctx.out_dir is not None:
            L.export(ctx.out_dir / GENERATOR_FILENAME)
            save_coefficients(
                ctx.out_dir / SOLUTION_FILENAME,
                solution.coefficients,
                {"tag": "phi", "config_hash": report.config_hash, **basis.descriptor()},
            )
    return report


register_experiment("poisson", run_poisson)
