"""Poisson solves, semigroup action, spectral gap and short-time scans.

Everything works on coefficient vectors in the orthonormal tensor basis, so
Euclidean norms are L^2 norms under the Gibbs measure and coefficient 0 is
the mean.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigs, expm_multiply, gmres, spilu, splu

from ..core.errors import EstimationError, SolverError, ValidationError
from ..core.logging import get_logger
from ..core.seeding import Stream, rng_for
from ..gle.model import GleModel
from .basis import SpectralBasis
from .operators import OperatorMatrix, derivative_family, family_norm

logger = get_logger(__name__)

POISSON_RTOL = 1e-8
MEAN_TOL = 1e-12
SEMIGROUP_MEAN_TOL = 1e-8
DENSE_LIMIT = 1500
# Amplitude of rough initial data at the top degree of a factor is exp(-EDGE_DAMPING)
EDGE_DAMPING = 8.0
RESOLVED_TAIL = 1e-3


# ============================================================================
# Poisson equation
# ============================================================================


@dataclass(eq=False)
class PoissonSolution:
    coefficients: np.ndarray
    basis: SpectralBasis
    residual: float
    method: str
    iterations: int = 0


def _preconditioner(block: sp.csr_matrix, basis: SpectralBasis, kind: str) -> LinearOperator | None:
    if kind == "none":
        return None
    if kind == "diagonal":
        degrees = basis.degrees()
        weight = 1.0 + sum(d.astype(float) for d in degrees)[1:]
        return LinearOperator(block.shape, matvec=lambda x: x / weight)
    if kind == "ilu":
        ilu = spilu(block.tocsc(), drop_tol=1e-6, fill_factor=20)
        return LinearOperator(block.shape, matvec=ilu.solve)
    raise ValidationError(f"unknown preconditioner '{kind}' (expected ilu, diagonal or none)")


def solve_poisson(
    L: OperatorMatrix,
    rhs: np.ndarray | None = None,
    rtol: float = POISSON_RTOL,
    preconditioner: str = "ilu",
) -> PoissonSolution:
    """Mean-zero Galerkin solution of L phi = rhs (default rhs = p).

    GMRES runs on the mean-zero block; on non-convergence the solve falls
    back to sparse LU.

    Raises:
        ValidationError: rhs with nonzero mean
        SolverError: Residual above rtol after the fallback
    """
    basis = L.basis
    rhs = basis.momentum() if rhs is None else np.asarray(rhs, dtype=float)
    if rhs.shape != (basis.dim,):
        raise ValidationError(
            f"rhs has shape {rhs.shape}, basis dimension is {basis.dim}", code="dimension_mismatch"
        )
    if abs(rhs[0]) > MEAN_TOL:
        raise ValidationError(
            f"rhs must have zero mean under the Gibbs measure (mean={rhs[0]:.3e})",
            code="nonzero_mean",
        )
    phi = np.zeros(basis.dim)
    b = rhs[1:]
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return PoissonSolution(phi, basis, 0.0, "trivial")

    block = L.mean_zero_block()
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    M = _preconditioner(block, basis, preconditioner)
    x, info = gmres(
        block, b, rtol=rtol * 0.1, atol=0.0, restart=200, maxiter=50, M=M,
        callback=count, callback_type="pr_norm",
    )
    residual = float(np.linalg.norm(block @ x - b)) / b_norm
    method = f"gmres+{preconditioner}"
    if info != 0 or residual > rtol:
        logger.warning(
            f"GMRES did not reach rtol={rtol:g} (info={info}, residual={residual:.3e}); "
            f"falling back to sparse LU"
        )
        x = splu(block.tocsc()).solve(b)
        residual = float(np.linalg.norm(block @ x - b)) / b_norm
        method = "splu"
    if not residual <= rtol:
        raise SolverError(
            f"Poisson solve residual {residual:.3e} above {rtol:g}",
            residual=residual,
        )
    phi[1:] = x
    logger.info(f"Poisson solve ({method}): residual={residual:.2e}, iterations={iterations}")
    return PoissonSolution(phi, basis, residual, method, iterations)


@dataclass
class DiffusionResult:
    D: float
    bound: float
    bound_ok: bool
    per_mode: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def diffusion_from_poisson(solution: PoissonSolution, model: GleModel) -> DiffusionResult:
    """D = (1/beta) sum_j alpha_j ||d_zj phi||^2, with the bound D <= (4/beta) sum alpha/lambda^2.

    In the Hermite basis ||d_z phi||^2 = beta sum_n n |phi_n|^2.

    Raises:
        SolverError: D <= 0
    """
    basis = solution.basis
    if model.m != basis.m or model.beta != basis.beta:
        raise ValidationError("model does not match the Poisson solution basis", code="dimension_mismatch")
    tensor = solution.coefficients.reshape(basis.shape) ** 2
    n = np.arange(basis.n_z + 1, dtype=float)
    per_mode = []
    for j, alpha in enumerate(model.alpha):
        shape = [1] * tensor.ndim
        shape[2 + j] = -1
        per_mode.append(float(alpha * np.sum(tensor * n.reshape(shape))))
    D = float(sum(per_mode))
    if not D > 0:
        raise SolverError(
            f"diffusion coefficient {D:.3e} is not positive; the basis is likely under-resolved",
            code="nonpositive_diffusion",
        )
    bound = (4.0 / model.beta) * float(np.sum(model.alpha_array / model.lam_array**2))
    return DiffusionResult(D=D, bound=bound, bound_ok=D <= bound, per_mode=per_mode)


# ============================================================================
# Semigroup
# ============================================================================


def semigroup_apply(L: OperatorMatrix, u0: np.ndarray, t: float, method: str = "krylov") -> np.ndarray:
    """u_t = exp(-t L) u0; ``method`` is ``krylov`` (expm_multiply) or ``dense``.

    Raises:
        ValidationError: t < 0
        SolverError: Non-finite result or drift of the mean
    """
    if t < 0:
        raise ValidationError(f"t must be >= 0 (got {t})")
    u0 = np.asarray(u0, dtype=float)
    if t == 0:
        return u0.copy()
    if method == "dense":
        u = scipy.linalg.expm(-t * L.dense()) @ u0
    elif method == "krylov":
        u = expm_multiply(-t * L.matrix.tocsc(), u0)
    else:
        raise ValidationError(f"unknown semigroup method '{method}'")
    if not np.all(np.isfinite(u)):
        raise SolverError(f"semigroup action at t={t} is not finite")
    drift = abs(u[0] - u0[0])
    if drift > SEMIGROUP_MEAN_TOL * max(1.0, float(np.linalg.norm(u0))):
        raise SolverError(f"semigroup changed the mean by {drift:.3e}", residual=drift)
    return u


def semigroup_path(L: OperatorMatrix, u0: np.ndarray, times: np.ndarray, method: str = "krylov") -> np.ndarray:
    """exp(-t L) u0 for increasing times, stepping between them; shape (len(times), dim)."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (len(times) and times[0] < 0):
        raise ValidationError("times must be nonnegative and increasing")
    out = np.empty((len(times), len(u0)))
    u, t_prev = np.asarray(u0, dtype=float), 0.0
    for i, t in enumerate(times):
        u = semigroup_apply(L, u, t - t_prev, method)
        out[i] = u
        t_prev = t
    return out


# ============================================================================
# Spectral gap
# ============================================================================


@dataclass
class GapResult:
    gap: float
    eigenvalues: list[complex]
    method: str
    refined_gap: float | None = None
    relative_change: float | None = None
    discarded: int = 0


GAP_RTOL = 0.02
SHELL_TOL = 0.1


def _filtered_eigenvalues(L: OperatorMatrix, k: int, shell_tol: float) -> tuple[np.ndarray, int, str]:
    """Eigenvalues of the mean-zero block whose eigenvectors keep the top shell under ``shell_tol``.

    Returns the kept values sorted by real part, the number discarded and the method.
    """
    block = L.mean_zero_block()
    n = block.shape[0]
    try:
        if n <= DENSE_LIMIT:
            values, vectors = scipy.linalg.eig(block.toarray())
            method = "dense"
        else:
            values, vectors = eigs(block.tocsc(), k=min(k, n - 2), sigma=0.0, which="LM")
            method = "arnoldi_shift_invert"
    except (np.linalg.LinAlgError, RuntimeError) as e:
        raise SolverError(f"eigensolver failed: {e}") from e
    shell = L.basis.outer_shell()[1:]
    weight = np.linalg.norm(vectors[shell], axis=0) / np.linalg.norm(vectors, axis=0)
    kept = values[weight <= shell_tol]
    return kept[np.argsort(kept.real)], int(np.sum(weight > shell_tol)), method


def spectral_gap(
    L: OperatorMatrix,
    refined: OperatorMatrix | None = None,
    k: int = 24,
    rtol: float = GAP_RTOL,
    shell_tol: float = SHELL_TOL,
) -> GapResult:
    """Smallest real part of the spectrum of L on mean-zero functions.

    Dense eigenpairs for small bases, shift-invert Arnoldi near 0 otherwise.
    Eigenvectors with more than ``shell_tol`` of their norm on the top-degree
    shell are truncation artefacts and are dropped. With ``refined`` (the same
    model on a larger basis) only eigenvalues reproduced there to relative
    accuracy ``rtol`` count, and the gap is taken from the refined basis.

    Raises:
        ValidationError: ``refined`` is not larger than L's basis
        EstimationError: No eigenvalue survives the filter or the refinement
        SolverError: Eigensolver failure or a nonpositive gap
    """
    if refined is not None and refined.basis.dim <= L.basis.dim:
        raise ValidationError(
            f"refined basis (dim {refined.basis.dim}) must be larger than {L.basis.dim}", code="not_refined"
        )
    values, discarded, method = _filtered_eigenvalues(L, k, shell_tol)
    refined_gap = change = None
    if refined is not None:
        fine, _, _ = _filtered_eigenvalues(refined, k, shell_tol)
        matched = []
        for value in values:
            if fine.size == 0:
                break
            nearest = fine[np.argmin(np.abs(fine - value))]
            if abs(nearest - value) <= rtol * abs(value):
                matched.append((value, nearest))
        values = np.array([v for v, _ in matched])
        if matched:
            coarse, nearest = matched[0]
            refined_gap = float(nearest.real)
            change = float(abs(nearest - coarse) / abs(coarse))
    if values.size == 0:
        raise EstimationError(
            "no eigenvalue of L is resolved by the basis" + (" and its refinement" if refined is not None else ""),
            code="gap_not_converged",
            details={"discarded": discarded, "dim": L.basis.dim},
        )
    gap = float(values.real[0]) if refined_gap is None else refined_gap
    if not gap > 0:
        raise SolverError(f"nonpositive spectral gap {gap:.3e}", code="nonpositive_gap")
    logger.info(f"Spectral gap ({method}): {gap:.6g}, {discarded} truncation modes dropped")
    return GapResult(
        gap=gap,
        eigenvalues=[complex(v) for v in values[:k]],
        method=method,
        refined_gap=refined_gap,
        relative_change=change,
        discarded=discarded,
    )


# ============================================================================
# Short-time derivative estimates
# ============================================================================


def rough_initial_data(basis: SpectralBasis, seed: int, index: int = 0) -> np.ndarray:
    """Mean-zero, unit-norm random coefficients, rough up to a smooth spectral cutoff.

    Each factor contributes variance 1/(1 + deg) times exp(-2 EDGE_DAMPING (deg/top)^4),
    so the profile is that of an L^2 function with no derivative in L^2 well
    inside the box, while the top degree of every factor carries a negligible
    share of the norm. Draw ``index`` uses stream (seed, index, SPECTRAL).
    """
    rng = rng_for(seed, index, Stream.SPECTRAL)
    variance = np.ones(basis.dim)
    for deg, top in zip(basis.degrees(), basis.top_degrees()):
        variance /= 1.0 + deg
        if top > 0:
            variance *= np.exp(-2.0 * EDGE_DAMPING * (deg / top) ** 4)
    u = rng.standard_normal(basis.dim) * np.sqrt(variance)
    u[0] = 0.0
    return u / np.linalg.norm(u)


@dataclass
class ShortTimeResult:
    times: list[float]
    norms: dict[str, list[float]]
    tail: list[float]
    window: tuple[float, float] | None
    slopes: dict[str, float | None]
    targets: dict[str, float]
    degenerate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


TARGETS = {"A": -0.5, "C": -1.5, "C2": -2.5}


def _longest_run(mask: np.ndarray) -> np.ndarray:
    """Mask of the longest contiguous stretch of True in ``mask`` (earliest on ties)."""
    best = np.zeros_like(mask, dtype=bool)
    start, length = 0, 0
    for i, flag in enumerate(np.append(mask, False)):
        if flag:
            continue
        if i - start > length:
            best[:] = False
            best[start:i] = True
            length = i - start
        start = i + 1
    return best


def short_time_scan(
    model: GleModel,
    L: OperatorMatrix,
    u0: np.ndarray,
    times: np.ndarray | None = None,
    t_max: float = 0.5,
    tail_fraction: float = 0.01,
    solver_tol: float = 1e-9,
    method: str = "krylov",
    min_points: int = 5,
) -> ShortTimeResult:
    """Log-log slopes of ||X_k exp(-tL) u0|| / ||u0|| for X = A, C, C2.

    The tail at time t is the norm of the top-degree shell of exp(-tL) u0
    relative to ||u0||. The fit window is the longest stretch of times up to
    ``t_max`` on which the tail stays under ``tail_fraction``, and only norms
    above 10 x solver_tol count. Initial data whose tail exceeds
    RESOLVED_TAIL are accepted with a warning.

    Raises:
        ValidationError: u0 with nonzero mean
        EstimationError: Fewer than ``min_points`` usable times
    """
    basis = L.basis
    times = np.geomspace(1e-3, 1.0, 40) if times is None else np.asarray(times, dtype=float)
    if np.any(times <= 0) or np.any(times > 1.0):
        raise ValidationError("short-time scan needs times in (0, 1]")
    u0 = np.asarray(u0, dtype=float)
    family = derivative_family(model, basis)
    fluctuation = float(np.linalg.norm(u0[1:]))
    if fluctuation == 0.0:
        zeros = {k: [0.0] * len(times) for k in family}
        return ShortTimeResult(
            times=times.tolist(), norms=zeros, tail=[0.0] * len(times), window=None,
            slopes={k: None for k in family}, targets=dict(TARGETS), degenerate=True,
        )
    if abs(u0[0]) > MEAN_TOL:
        raise ValidationError(f"u0 must be mean-zero (mean={u0[0]:.3e})", code="nonzero_mean")

    path = semigroup_path(L, u0, times, method)
    norm0 = float(np.linalg.norm(u0))
    shell = basis.outer_shell()
    initial_tail = float(np.linalg.norm(u0[shell])) / norm0
    if initial_tail > RESOLVED_TAIL:
        logger.warning(f"Initial data not spectrally resolved: top shell carries {initial_tail:.2e} of the norm")
    tail = np.linalg.norm(path[:, shell], axis=1) / norm0
    norms = {k: np.array([family_norm(ops, u) / norm0 for u in path]) for k, ops in family.items()}

    in_window = _longest_run((tail < tail_fraction) & (times <= t_max))
    slopes: dict[str, float | None] = {}
    for k, values in norms.items():
        usable = in_window & (values > 10 * solver_tol)
        if usable.sum() < min_points:
            raise EstimationError(
                f"short-time window for {k} has {int(usable.sum())} usable points (need {min_points})",
                code="window_too_short",
                details={"resolved_points": int(in_window.sum()), "t_max": t_max},
            )
        slopes[k] = float(np.polyfit(np.log(times[usable]), np.log(values[usable]), 1)[0])
    window = (float(times[in_window][0]), float(times[in_window][-1]))
    logger.info(f"Short-time slopes on t in [{window[0]:.3g}, {window[1]:.3g}]: {slopes}")
    return ShortTimeResult(
        times=times.tolist(),
        norms={k: v.tolist() for k, v in norms.items()},
        tail=tail.tolist(),
        window=window,
        slopes=slopes,
        targets=dict(TARGETS),
    )
