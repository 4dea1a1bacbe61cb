"""Symbolic commutator table, one verdict per identity."""

from ..core.models import ExperimentReport
from ..spectral.symbolic import commutator_table
from .base import RunContext, new_report
from .registry import register_experiment


def run_commutators(ctx: RunContext) -> ExperimentReport:
    report = new_report("commutators", ctx, constants="alpha = lambda = beta = 1", potential="V opaque")
    with ctx.timed("symbolic"):
        checks = commutator_table()
    for check in checks:
        report.values[check.name] = {"computed": check.computed, "expected": check.expected}
        report.add_verdict(
            "commutator_identity", check.name, None, check.expected, check.holds,
            detail=check.computed,
        )
    return report


register_experiment("commutators", run_commutators)
