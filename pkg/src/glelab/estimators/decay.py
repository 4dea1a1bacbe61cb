"""Exponential decay fits."""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..core.errors import EstimationError
from ..core.models import EstimateWithCI

MIN_POINTS = 6


@dataclass
class DecayFit:
    rate: EstimateWithCI
    amplitude: float
    r2: float


def _log_weights(y: np.ndarray, sigma: np.ndarray | None, sigma_floor: float | None) -> np.ndarray:
    """Normalized weights (y / sigma)^2 of the log-space residuals.

    Standard errors below ``sigma_floor`` (default: the smallest positive
    one) are raised to it; without any positive error the fit is unweighted.
    """
    if sigma is None:
        return np.full_like(y, 1.0 / len(y))
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != y.shape:
        raise EstimationError(f"sigma has shape {sigma.shape}, values have {y.shape}")
    if np.any(np.isnan(sigma)) or np.any(sigma < 0):
        raise EstimationError("standard errors must be nonnegative", code="invalid_sigma")
    floor = sigma_floor
    if floor is None:
        positive = sigma[sigma > 0]
        floor = float(positive.min()) if positive.size else 0.0
    if not floor > 0:
        return np.full_like(y, 1.0 / len(y))
    log_ratio = np.log(y) - np.log(np.maximum(sigma, floor))
    w = np.exp(2.0 * (log_ratio - log_ratio.max()))
    return w / w.sum()


def fit_exponential_decay(
    t: np.ndarray,
    y: np.ndarray,
    sigma: np.ndarray | None = None,
    confidence: float = 0.95,
    sigma_floor: float | None = None,
) -> DecayFit:
    """Weighted least squares of log y = log a - rate * t.

    ``sigma`` are standard errors of y; they weight the log-space residuals
    by (y / sigma)^2, with zero errors raised to ``sigma_floor``. A positive
    rate means decay. The rate interval uses the effective sample size
    1 / sum(w^2) of the normalized weights.

    Raises:
        EstimationError: Fewer than 6 points, y <= 0 in the window, or a
            non-finite fit
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise EstimationError("t and y must be 1-d arrays of equal length")
    if len(t) < MIN_POINTS:
        raise EstimationError(
            f"need at least {MIN_POINTS} points for a decay fit (got {len(t)})",
            code="too_few_points",
        )
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise EstimationError("decay fit needs positive finite values", code="nonpositive_values")

    log_y = np.log(y)
    w = _log_weights(y, sigma, sigma_floor)

    t_bar = float(np.sum(w * t))
    l_bar = float(np.sum(w * log_y))
    s_tt = float(np.sum(w * (t - t_bar) ** 2))
    if not s_tt > 0.0:
        raise EstimationError("decay fit needs at least two distinct times", code="degenerate_times")
    slope = float(np.sum(w * (t - t_bar) * (log_y - l_bar))) / s_tt
    intercept = l_bar - slope * t_bar
    resid = log_y - (intercept + slope * t)
    ss_res = float(np.sum(w * resid**2))
    ss_tot = float(np.sum(w * (log_y - l_bar) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, l_bar**2) else 1.0 - ss_res / ss_tot

    n = len(t)
    n_eff = 1.0 / float(np.sum(w**2))
    se = np.sqrt(ss_res / max(n_eff - 2.0, 1.0) / s_tt)
    half = float(stats.t.ppf(0.5 + confidence / 2.0, df=n - 2)) * float(se)
    rate = -slope
    if not all(np.isfinite([rate, half, r2, intercept])):
        raise EstimationError(
            f"decay fit is not finite (rate={rate}, half-width={half}, R^2={r2})",
            code="non_finite_fit",
        )
    return DecayFit(
        rate=EstimateWithCI(
            value=rate,
            lo=rate - half,
            hi=rate + half,
            method="weighted_log_linear",
            n=n,
            window={"t_min": float(t.min()), "t_max": float(t.max())},
        ),
        amplitude=float(np.exp(intercept)),
        r2=float(r2),
    )
