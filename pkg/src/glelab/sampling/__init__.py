"""Equilibrium sampling, divergence estimators and Lyapunov drift checks."""

from .divergence import Binning, DivergenceReport, divergence_report
from .gibbs import GibbsSampler, PositionMarginal, position_marginal, sample_gibbs
from .lyapunov import LyapunovSpec, lyapunov_drift_check, symbolic_drift

__all__ = [
    "GibbsSampler",
    "PositionMarginal",
    "position_marginal",
    "sample_gibbs",
    "Binning",
    "DivergenceReport",
    "divergence_report",
    "LyapunovSpec",
    "lyapunov_drift_check",
    "symbolic_drift",
]
