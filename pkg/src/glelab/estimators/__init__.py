"""Statistical estimators with confidence intervals."""

from .decay import DecayFit, fit_exponential_decay
from .diffusion import green_kubo, martingale_diffusion, msd_diffusion
from .strong import strong_error

__all__ = [
    "DecayFit",
    "fit_exponential_decay",
    "msd_diffusion",
    "green_kubo",
    "martingale_diffusion",
    "strong_error",
]
