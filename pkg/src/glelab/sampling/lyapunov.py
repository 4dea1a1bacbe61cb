"""Lyapunov drift verification for the single-mode system.

For m = 1 with auxiliary variable r = z_1 the generator acts as

    L f = p . grad_q f + (-grad V + lambda r) . grad_p f
          + (-lambda p - alpha r) . grad_r f + (alpha / beta) Laplacian_r f

and the candidate Lyapunov function is

    G = C_hat + A/2 |q|^2 + B/2 |p|^2 + C/2 |r|^2 + D V(q)
        + E (p, q) + F (q, r) + H (p, r) + M (grad V, p).

On the torus only the q-free terms are allowed (A = E = F = M = 0). The
check evaluates L(G^l) + a G^l in closed form on radial shells and asks that
the per-shell maxima eventually stop growing.
"""

from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np
import sympy

from ..core.errors import ValidationError
from ..core.logging import get_logger
from ..gle.model import GleModel

logger = get_logger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class LyapunovSpec:
    """Weights of G and drift constant a; ``power`` is the exponent l >= 1."""

    C_hat: float = 2.0
    A: float = 0.0
    B: float = 13 / 16
    C: float = 5 / 8
    D: float = 13 / 16
    E: float = 0.0
    F: float = 0.0
    H: float = 3 / 16
    M: float = 0.0
    a: float = 0.25
    power: int = 1

    @classmethod
    def torus_default(cls) -> "LyapunovSpec":
        """Torus constants a = 1/4, B = D = 13/16, C = 5/8, H = 3/16."""
        return cls()


@dataclass
class DriftReport:
    d_hat: float
    a: float
    passed: bool
    fitted_radius: float
    shell_radii: list[float] = field(default_factory=list)
    shell_maxima: list[float] = field(default_factory=list)
    min_G: float = 0.0
    n_points: int = 0
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _require_single_mode(model: GleModel) -> None:
    if model.m != 1:
        raise ValidationError(
            f"Lyapunov drift check is defined for m = 1 (got m={model.m})",
            code="unsupported_model",
        )


def validate_spec(spec: LyapunovSpec, model: GleModel) -> None:
    """Check the sign constraints that make G >= 1.

    Raises:
        ValidationError: When the constants cannot give a norm-like G
    """
    if spec.power < 1:
        raise ValidationError(f"power must be >= 1 (got {spec.power})")
    if not spec.a > 0:
        raise ValidationError(f"drift constant a must be > 0 (got {spec.a})")
    if model.is_torus:
        if any(getattr(spec, k) != 0.0 for k in ("A", "E", "F", "M")):
            raise ValidationError(
                "torus Lyapunov form cannot contain q-polynomial terms (A, E, F, M must be 0)",
                code="lyapunov_constants",
            )
        if not (spec.B > spec.H and spec.C > spec.H):
            raise ValidationError(
                f"Lyapunov constants need B > H and C > H (got B={spec.B}, C={spec.C}, H={spec.H})",
                code="lyapunov_constants",
            )
        grid = np.linspace(0.0, TWO_PI, 2048, endpoint=False)
        k = max(0.0, -float(np.min(model.potential.profile(grid)))) * model.d
        if not spec.C_hat > spec.D * k:
            raise ValidationError(
                f"Lyapunov constants need C_hat > D k (got C_hat={spec.C_hat}, D k={spec.D * k:.4g})",
                code="lyapunov_constants",
            )
    else:
        quad = np.array(
            [[spec.A, spec.E, spec.F], [spec.E, spec.B, spec.H], [spec.F, spec.H, spec.C]]
        )
        if np.linalg.eigvalsh(quad).min() <= 0:
            raise ValidationError(
                "Lyapunov quadratic form [[A,E,F],[E,B,H],[F,H,C]] must be positive definite",
                code="lyapunov_constants",
            )


# ============================================================================
# Closed-form evaluation
# ============================================================================


def lyapunov_value(spec: LyapunovSpec, model: GleModel, q, p, r) -> np.ndarray:
    """G at points; q, p, r of shape (n, d)."""
    V = model.potential.value(q)
    gV = model.potential.grad(q)
    dot = lambda x, y: np.sum(x * y, axis=-1)  # noqa: E731
    G = (
        spec.C_hat
        + 0.5 * spec.B * dot(p, p)
        + 0.5 * spec.C * dot(r, r)
        + spec.D * V
        + spec.H * dot(p, r)
    )
    if not model.is_torus:
        G = G + 0.5 * spec.A * dot(q, q) + spec.E * dot(p, q) + spec.F * dot(q, r)
        G = G + spec.M * dot(gV, p)
    return G


def lyapunov_generator(spec: LyapunovSpec, model: GleModel, q, p, r) -> np.ndarray:
    """L(G^l) at points, from the closed-form gradients of G."""
    _require_single_mode(model)
    lam, alpha, beta = model.lam[0], model.alpha[0], model.beta
    pot = model.potential
    gV = pot.grad(q)
    d = q.shape[-1]
    dot = lambda x, y: np.sum(x * y, axis=-1)  # noqa: E731

    grad_q = spec.D * gV + spec.E * p + spec.F * r
    grad_p = spec.B * p + spec.E * q + spec.H * r + spec.M * gV
    grad_r = spec.C * r + spec.F * q + spec.H * p
    if not model.is_torus:
        hess_p = pot.profile_curv(q) * p
        grad_q = grad_q + spec.A * q + spec.M * hess_p

    LG = (
        dot(p, grad_q)
        + dot(-gV + lam * r, grad_p)
        + dot(-lam * p - alpha * r, grad_r)
        + (alpha / beta) * spec.C * d
    )
    if spec.power == 1:
        return LG
    G = lyapunov_value(spec, model, q, p, r)
    l_ = spec.power
    return l_ * G ** (l_ - 1) * LG + l_ * (l_ - 1) * G ** (l_ - 2) * (alpha / beta) * dot(
        grad_r, grad_r
    )


def symbolic_drift(spec: LyapunovSpec, model: GleModel):
    """Independent sympy oracle for L(G^l) (d = 1); returns f(q, p, r) -> array."""
    _require_single_mode(model)
    if model.d != 1:
        raise ValidationError("symbolic drift oracle supports d = 1 only")
    q, p, r = sympy.symbols("q p r", real=True)
    V = model.potential.sympy_profile(q)
    Vp = sympy.diff(V, q)
    lam = sympy.Float(model.lam[0])
    alpha = sympy.Float(model.alpha[0])
    beta = sympy.Float(model.beta)
    S = {k: sympy.Float(getattr(spec, k)) for k in ("C_hat", "B", "C", "D", "H")}
    G = S["C_hat"] + S["B"] / 2 * p**2 + S["C"] / 2 * r**2 + S["D"] * V + S["H"] * p * r
    if not model.is_torus:
        A, E, F, M = (sympy.Float(getattr(spec, k)) for k in ("A", "E", "F", "M"))
        G = G + A / 2 * q**2 + E * p * q + F * q * r + M * Vp * p
    Gl = G**spec.power
    LG = (
        p * sympy.diff(Gl, q)
        + (-Vp + lam * r) * sympy.diff(Gl, p)
        + (-lam * p - alpha * r) * sympy.diff(Gl, r)
        + alpha / beta * sympy.diff(Gl, r, 2)
    )
    return sympy.lambdify((q, p, r), sympy.expand(LG), modules="numpy")


# ============================================================================
# Sampling and the drift check
# ============================================================================


def radial_points(
    model: GleModel,
    n_points: int = 10_000,
    r_min: float = 0.1,
    r_max: float = 100.0,
    n_shells: int = 25,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Points on geometric shells of |x|; q uniform on the torus.

    Returns (q, p, r, shell_index).
    """
    rng = np.random.default_rng(seed)
    d = model.d
    radii = np.geomspace(r_min, r_max, n_shells)
    shell = np.repeat(np.arange(n_shells), int(np.ceil(n_points / n_shells)))[:n_points]
    dim = 2 * d if model.is_torus else 3 * d
    u = rng.standard_normal((n_points, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    x = radii[shell, None] * u
    if model.is_torus:
        q = rng.uniform(0.0, TWO_PI, (n_points, d))
        p, r = x[:, :d], x[:, d:]
    else:
        q, p, r = x[:, :d], x[:, d : 2 * d], x[:, 2 * d :]
    return q, p, r, shell


def lyapunov_drift_check(
    model: GleModel,
    spec: LyapunovSpec,
    points: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None,
    tolerance: float = 1e-9,
) -> DriftReport:
    """Evaluate L(G^l) + a G^l on radial shells.

    PASS iff d_hat = max(L G^l + a G^l) is finite and the per-shell maxima are
    non-increasing from a fitted radius covering at least the outer half of
    the shells.

    Raises:
        ValidationError: G < 1 somewhere, or constants break positivity
    """
    _require_single_mode(model)
    validate_spec(spec, model)
    q, p, r, shell = points if points is not None else radial_points(model)

    G = lyapunov_value(spec, model, q, p, r)
    if np.min(G) < 1.0:
        raise ValidationError(
            f"G < 1 at some points (min {float(np.min(G)):.4g}): constants violate positivity",
            code="lyapunov_positivity",
        )
    drift = lyapunov_generator(spec, model, q, p, r) + spec.a * G**spec.power
    d_hat = float(np.max(drift))

    shells = np.unique(shell)
    radii = np.sqrt(np.sum(p**2, axis=-1) + np.sum(r**2, axis=-1))
    if not model.is_torus:
        radii = np.sqrt(radii**2 + np.sum(q**2, axis=-1))
    shell_r = [float(np.median(radii[shell == s])) for s in shells]
    maxima = np.array([float(np.max(drift[shell == s])) for s in shells])

    # Smallest start index from which the maxima are non-increasing
    scale = np.maximum(1.0, np.abs(maxima))
    start = len(maxima) - 1
    while start > 0 and maxima[start] <= maxima[start - 1] + tolerance * scale[start - 1]:
        start -= 1
    passed = bool(np.isfinite(d_hat) and start <= len(maxima) // 2)

    report = DriftReport(
        d_hat=d_hat,
        a=spec.a,
        passed=passed,
        fitted_radius=shell_r[start],
        shell_radii=shell_r,
        shell_maxima=maxima.tolist(),
        min_G=float(np.min(G)),
        n_points=int(G.size),
        detail=f"maxima non-increasing from shell {start} of {len(maxima)}",
    )
    logger.info(
        f"Lyapunov drift: d_hat={d_hat:.4g}, fitted radius={report.fitted_radius:.3g}, "
        f"{'PASS' if passed else 'FAIL'}"
    )
    return report


def far_field_ratio(spec: LyapunovSpec, model: GleModel, radius: float = 100.0, n: int = 2000, seed: int = 0) -> float:
    """max L G / G over points with |x| = radius."""
    q, p, r, _ = radial_points(model, n, radius, radius, 1, seed)
    G = lyapunov_value(spec, model, q, p, r)
    LG = lyapunov_generator(LyapunovSpec(**{**asdict(spec), "power": 1}), model, q, p, r)
    return float(np.max(LG / G))


def fit_confining_spec(
    model: GleModel,
    radius: float = 100.0,
    grid: dict[str, tuple[float, ...]] | None = None,
) -> LyapunovSpec:
    """Grid search over (A, B, C, E, F, H) with D = M = 0 and C_hat = 1.

    Keeps the positive-definite candidate with the most negative far-field
    L G / G and sets a to half of that margin.

    Raises:
        ValidationError: No candidate has a negative far-field drift
    """
    _require_single_mode(model)
    if model.is_torus:
        raise ValidationError("fit_confining_spec applies to confining models")
    grid = grid or {
        "A": (0.5, 1.0, 1.3, 1.5, 2.0),
        "B": (0.5, 1.0, 1.5),
        "C": (0.5, 1.0, 1.5),
        "E": (0.05, 0.1, 0.2, 0.3),
        "F": (0.1, 0.2, 0.3, 0.5),
        "H": (0.1, 0.2, 0.3, 0.5),
    }
    best: tuple[float, LyapunovSpec] | None = None
    for values in product(*grid.values()):
        params = dict(zip(grid.keys(), values))
        quad = np.array(
            [
                [params["A"], params["E"], params["F"]],
                [params["E"], params["B"], params["H"]],
                [params["F"], params["H"], params["C"]],
            ]
        )
        if np.linalg.eigvalsh(quad).min() <= 0:
            continue
        candidate = LyapunovSpec(C_hat=1.0, D=0.0, M=0.0, a=1.0, **params)
        ratio = far_field_ratio(candidate, model, radius)
        if best is None or ratio < best[0]:
            best = (ratio, candidate)
    if best is None or best[0] >= 0:
        raise ValidationError(
            "no Lyapunov candidate with negative far-field drift in the search grid",
            code="lyapunov_fit_failed",
        )
    ratio, spec = best
    fitted = LyapunovSpec(**{**asdict(spec), "a": -ratio / 2.0})
    logger.info(f"Fitted confining Lyapunov spec: {fitted} (far-field LG/G={ratio:.4g})")
    return fitted
