"""Diffusion coefficient estimators.

Three routes to D for stationary-start paths:

- ``msd_diffusion``: slope of the mean squared displacement, over lags past
  the ballistic transient.
- ``green_kubo``: integral of the momentum autocorrelation, or the closed
  form for V = 0.
- ``martingale_diffusion``: slope of E M_t^2 for the martingale
  M_t = q_t - q_0 + phi(x_t) - phi(x_0), phi the Poisson solution.

Confidence intervals come from bootstrapping replicas.
"""

import numpy as np
from scipy import fft
from scipy.integrate import trapezoid

from ..core.errors import EstimationError, ValidationError
from ..core.logging import get_logger
from ..core.models import EstimateWithCI
from ..core.seeding import Stream, rng_for
from ..dynamics.simulate import TrajectorySet
from ..gle.model import GleModel, is_free
from ..spectral.basis import evaluate_expansion
from ..spectral.solvers import PoissonSolution

logger = get_logger(__name__)

DEFAULT_BOOTSTRAP = 200
VACF_THRESHOLD = 0.05
GK_NOISE_SIGMAS = 2.0
MIN_SETTLE_LAGS = 10
MIN_R2 = 0.95
MAX_ORIGINS = 64


def _bootstrap(per_replica: np.ndarray, statistic, seed: int, n_boot: int) -> np.ndarray:
    rng = rng_for(seed, 0, Stream.BOOTSTRAP)
    R = per_replica.shape[0]
    return np.array([statistic(per_replica[rng.integers(0, R, R)].mean(axis=0)) for _ in range(n_boot)])


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Per-replica autocorrelation of x (R, T, d), averaged over d: shape (R, T).

    Lag k is normalized by the T - k available origins.
    """
    R, T, d = x.shape
    n = fft.next_fast_len(2 * T)
    spectrum = fft.rfft(x, n=n, axis=1)
    acf = fft.irfft(spectrum * np.conj(spectrum), n=n, axis=1)[:, :T]
    return acf.mean(axis=-1) / (T - np.arange(T))


def _displacement_curves(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Per-replica mean squared displacement, summed over coordinates: (R, max_lag + 1)."""
    R, T = x.shape[:2]
    out = np.zeros((R, max_lag + 1))
    for k in range(1, max_lag + 1):
        origins = np.arange(0, T - k, max(1, (T - k) // MAX_ORIGINS))
        diff = x[:, origins + k] - x[:, origins]
        out[:, k] = np.sum(diff**2, axis=-1).mean(axis=1)
    return out


def msd_curve(paths: TrajectorySet, max_lag: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(lags, E|q(t + s) - q(s)|^2) averaged over replicas, for lag indices 0..max_lag."""
    max_lag = len(paths.times) // 2 if max_lag is None else max_lag
    curves = _displacement_curves(paths.q_unwrapped, max_lag)
    return paths.times[: max_lag + 1] - paths.times[0], curves.mean(axis=0)


def _linear_fit(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _vacf_window_start(paths: TrajectorySet) -> int:
    acf = autocorrelation(paths.p).mean(axis=0)
    if acf[0] <= 0:
        raise EstimationError("momentum autocorrelation vanishes at lag 0", code="degenerate_vacf")
    below = np.flatnonzero(np.abs(acf) < VACF_THRESHOLD * acf[0])
    if below.size == 0:
        raise EstimationError(
            "momentum autocorrelation never falls below 5% of its initial value; "
            "the ballistic transient does not end within the paths",
            code="window_too_early",
        )
    return int(below[0])


def _fit_window(paths: TrajectorySet, window: tuple[float, float] | None) -> tuple[int, int]:
    T = len(paths.times)
    max_lag = T // 2
    if window is None:
        start = _vacf_window_start(paths)
        stop = max_lag
    else:
        dt = paths.times[1] - paths.times[0]
        start = int(round(window[0] / dt))
        stop = min(int(round(window[1] / dt)), T - 1)
    if stop - start < 3:
        raise EstimationError(
            f"fit window [{start}, {stop}] (lag indices) has fewer than 4 points",
            code="window_too_short",
        )
    return start, stop


def msd_diffusion(
    paths: TrajectorySet,
    window: tuple[float, float] | None = None,
    seed: int = 0,
    n_boot: int = DEFAULT_BOOTSTRAP,
) -> EstimateWithCI:
    """D = slope(E|q(t + s) - q(s)|^2) / (2 d) over the fit window.

    Without ``window`` the fit starts at the first lag where the momentum
    autocorrelation drops below 5% of its lag-0 value and ends at half the
    path length.

    Raises:
        EstimationError: R^2 < 0.95 (window too early) or an empty window
    """
    start, stop = _fit_window(paths, window)
    curves = _displacement_curves(paths.q_unwrapped, stop)
    lags = paths.times[: stop + 1] - paths.times[0]
    sel = slice(start, stop + 1)
    scale = 1.0 / (2.0 * paths.d)
    slope, _, r2 = _linear_fit(lags[sel], curves.mean(axis=0)[sel])
    if r2 < MIN_R2:
        raise EstimationError(
            f"mean squared displacement is not linear in the window (R^2={r2:.3f}); window too early",
            code="window_too_early",
            details={"r2": r2, "t_start": float(lags[start])},
        )
    boots = _bootstrap(curves, lambda c: _linear_fit(lags[sel], c[sel])[0] * scale, seed, n_boot)
    estimate = EstimateWithCI.from_bootstrap(
        slope * scale, boots, "msd", n=paths.n_replicas,
        window={"t_start": float(lags[start]), "t_stop": float(lags[stop]), "r2": r2},
    )
    logger.info(f"MSD diffusion: D={estimate.value:.5g} [{estimate.lo:.5g}, {estimate.hi:.5g}], R^2={r2:.4f}")
    return estimate


def _gk_cutoff(acf: np.ndarray, floor: np.ndarray) -> int:
    """First lag from which |acf| stays under its noise floor for max(10, lag / 2) lags."""
    below = np.abs(acf) < floor
    K = len(acf)
    for k in np.flatnonzero(below):
        if k == 0:
            continue
        span = max(MIN_SETTLE_LAGS, int(k) // 2)
        if k + span > K:
            break
        if below[k : k + span].all():
            return int(k)
    return -1


def _gk_tail_window(acf: np.ndarray, cut: int, floor: float) -> slice | None:
    """Last decade of the resolved correlogram before the cut, if it decays without a sign change."""
    above = np.flatnonzero(acf[:cut] >= 10.0 * floor)
    start = int(above[-1]) if above.size else 0
    window = slice(start, cut)
    if cut - start < 3 or np.any(acf[window] <= 0):
        return None
    return window


def _gk_integral(acf: np.ndarray, lags: np.ndarray, cut: int, tail: slice | None) -> float:
    integral = float(trapezoid(acf[: cut + 1], lags[: cut + 1]))
    if tail is not None and np.all(acf[tail] > 0):
        slope, intercept = np.polyfit(lags[tail], np.log(acf[tail]), 1)
        if slope < 0:
            integral += float(np.exp(intercept + slope * lags[cut])) / -slope
    return integral


def green_kubo(
    paths: TrajectorySet | None = None,
    model: GleModel | None = None,
    analytic: bool = False,
    max_lag: float | None = None,
    seed: int = 0,
    n_boot: int = DEFAULT_BOOTSTRAP,
) -> EstimateWithCI:
    """D = integral of <p(0) p(t)> dt (per coordinate).

    Estimated mode integrates the empirical correlogram up to the first lag
    from which it stays within ``GK_NOISE_SIGMAS`` standard errors of zero,
    and extrapolates beyond that lag with an exponential fitted to the last
    decade of the resolved decay (skipped when that stretch changes sign).
    Lags are searched up to ``max_lag`` (default half the path). Analytic
    mode returns (1/beta) (M^-1)_pp for V = 0, M the drift matrix of the
    (p, z) block.

    Raises:
        ValidationError: Analytic mode with V != 0, no input, or a single replica
        EstimationError: Correlogram not settled into its noise floor by max_lag
    """
    if analytic:
        if model is None:
            raise ValidationError("analytic Green-Kubo needs a model")
        if not is_free(model):
            raise ValidationError(
                "analytic Green-Kubo is available for V = 0 only", code="analytic_requires_free"
            )
        D = float(np.linalg.inv(model.linear_drift())[0, 0]) / model.beta
        return EstimateWithCI(value=D, lo=D, hi=D, method="green_kubo_analytic")
    if paths is None:
        raise ValidationError("green_kubo needs paths or analytic=True with a model")
    if paths.n_replicas < 2:
        raise ValidationError("Green-Kubo noise floor needs at least 2 replicas")

    T = len(paths.times)
    dt = float(paths.times[1] - paths.times[0])
    K = T // 2 if max_lag is None else min(int(round(max_lag / dt)) + 1, T)
    per_replica = autocorrelation(paths.p)[:, :K]
    lags = paths.times[:K] - paths.times[0]
    acf = per_replica.mean(axis=0)
    if not acf[0] > 0:
        raise EstimationError("momentum autocorrelation vanishes at lag 0", code="degenerate_vacf")
    floor = GK_NOISE_SIGMAS * per_replica.std(axis=0, ddof=1) / np.sqrt(paths.n_replicas)
    cut = _gk_cutoff(acf, floor)
    if cut < 0:
        raise EstimationError(
            f"momentum autocorrelation has not settled into its noise floor by lag {lags[-1]:.3g}",
            code="non_decaying_autocorrelation",
            details={"max_lag": float(lags[-1])},
        )
    tail = _gk_tail_window(acf, cut, float(floor[cut]))
    D = _gk_integral(acf, lags, cut, tail)
    boots = _bootstrap(per_replica, lambda c: _gk_integral(c, lags, cut, tail), seed, n_boot)
    estimate = EstimateWithCI.from_bootstrap(
        D, boots, "green_kubo", n=paths.n_replicas,
        window={"max_lag": float(lags[-1]), "t_cut": float(lags[cut]), "extrapolated": float(tail is not None)},
    )
    logger.info(f"Green-Kubo diffusion: D={D:.5g} [{estimate.lo:.5g}, {estimate.hi:.5g}], cut at t={lags[cut]:.3g}")
    return estimate


def martingale_diffusion(
    paths: TrajectorySet,
    solution: PoissonSolution,
    seed: int = 0,
    n_boot: int = DEFAULT_BOOTSTRAP,
    max_lag: float | None = None,
) -> EstimateWithCI:
    """D = slope(E M_t^2) / 2 with M_t = q_t - q_0 + phi(x_t) - phi(x_0) (d = 1).

    M has no ballistic transient, so the fit runs from lag 0.
    """
    if paths.d != 1 or paths.m != solution.basis.m:
        raise ValidationError(
            "martingale estimator needs d = 1 paths of the Poisson solution's model",
            code="dimension_mismatch",
        )
    R, T = paths.q.shape[:2]
    phi = evaluate_expansion(
        solution.basis,
        solution.coefficients,
        paths.q.reshape(-1),
        paths.p.reshape(-1),
        paths.z.reshape(R * T, -1),
    ).reshape(R, T, 1)
    martingale = paths.q_unwrapped + phi
    dt = float(paths.times[1] - paths.times[0])
    K = T // 2 if max_lag is None else min(int(round(max_lag / dt)), T - 1)
    curves = _displacement_curves(martingale, K)
    lags = paths.times[: K + 1] - paths.times[0]
    slope, _, r2 = _linear_fit(lags, curves.mean(axis=0))
    boots = _bootstrap(curves, lambda c: _linear_fit(lags, c)[0] / 2.0, seed, n_boot)
    estimate = EstimateWithCI.from_bootstrap(
        slope / 2.0, boots, "martingale", n=R,
        window={"t_start": 0.0, "t_stop": float(lags[-1]), "r2": r2},
    )
    logger.info(f"Martingale diffusion: D={estimate.value:.5g} [{estimate.lo:.5g}, {estimate.hi:.5g}], R^2={r2:.4f}")
    return estimate
