"""Galerkin matrices of the generator and its derivative operators.

In L^2 of the Gibbs measure the generator splits as L = B + A*A with

    B   = -p d_q + V'(q) d_p + sum_j lambda_j (p d_zj - z_j d_p)
    A*A = sum_j alpha_j (z_j d_zj - (1/beta) d_zj^2)

so that d/dt u = -L u. Matrices act on coefficient vectors: entry (i, j)
is <e_i, X e_j>. B is antisymmetric and A*A is diagonal and nonnegative in
the orthonormal basis.
"""

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm

from ..core.errors import ValidationError
from ..core.logging import get_logger
from ..core.storage import save_sparse
from ..gle.model import GleModel
from .basis import SpectralBasis, hermite_derivative, hermite_number, hermite_position

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Sparse operator matrix tagged with its name and basis."""

    matrix: sp.csr_matrix
    tag: str
    basis: SpectralBasis

    @property
    def basis_fingerprint(self) -> str:
        return self.basis.fingerprint

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        return self.matrix @ other

    def mean_zero_block(self) -> sp.csr_matrix:
        """Restriction to the orthogonal complement of constants (drops index 0)."""
        return self.matrix[1:, 1:].tocsr()

    def export(self, path) -> None:
        save_sparse(path, self.matrix, {"tag": self.tag, **self.basis.descriptor()})


def _kron(*factors) -> sp.csr_matrix:
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), [sp.csr_matrix(f) for f in factors])


@dataclass(frozen=True, eq=False)
class FactorMatrices:
    """One-factor matrices for a basis."""

    q_derivative: np.ndarray
    q_force: np.ndarray
    p_position: np.ndarray
    p_derivative: np.ndarray
    z_position: np.ndarray
    z_derivative: np.ndarray
    z_number: np.ndarray
    eye_q: np.ndarray
    eye_p: np.ndarray
    eye_z: np.ndarray

    @classmethod
    def build(cls, basis: SpectralBasis) -> "FactorMatrices":
        beta = basis.beta
        return cls(
            q_derivative=basis.position.derivative,
            q_force=basis.position.force,
            p_position=hermite_position(basis.n_p, beta),
            p_derivative=hermite_derivative(basis.n_p, beta),
            z_position=hermite_position(basis.n_z, beta),
            z_derivative=hermite_derivative(basis.n_z, beta),
            z_number=hermite_number(basis.n_z),
            eye_q=np.eye(2 * basis.n_q + 1),
            eye_p=np.eye(basis.n_p + 1),
            eye_z=np.eye(basis.n_z + 1),
        )

    def z_factors(self, m: int, j: int, mat: np.ndarray) -> list[np.ndarray]:
        """z_1 ... z_m factors with ``mat`` in slot j and identities elsewhere."""
        return [mat if i == j else self.eye_z for i in range(m)]


def _check_model(model: GleModel, basis: SpectralBasis) -> None:
    if model.d != 1 or model.m != basis.m or model.beta != basis.beta:
        raise ValidationError(
            f"basis (m={basis.m}, beta={basis.beta}) does not match model "
            f"(d={model.d}, m={model.m}, beta={model.beta})",
            code="dimension_mismatch",
        )


def assemble_transport(model: GleModel, basis: SpectralBasis) -> OperatorMatrix:
    """Antisymmetric part B."""
    _check_model(model, basis)
    f = FactorMatrices.build(basis)
    m = model.m
    eye_z = [f.eye_z] * m
    B = -_kron(f.q_derivative, f.p_position, *eye_z) + _kron(f.q_force, f.p_derivative, *eye_z)
    for j, lam in enumerate(model.lam):
        B = B - lam * _kron(f.eye_q, f.p_derivative, *f.z_factors(m, j, f.z_position))
        B = B + lam * _kron(f.eye_q, f.p_position, *f.z_factors(m, j, f.z_derivative))
    return OperatorMatrix(B.tocsr(), "B", basis)


def assemble_dissipation(model: GleModel, basis: SpectralBasis) -> OperatorMatrix:
    """Symmetric nonnegative part A*A."""
    _check_model(model, basis)
    f = FactorMatrices.build(basis)
    m = model.m
    S = sp.csr_matrix((basis.dim, basis.dim))
    for j, alpha in enumerate(model.alpha):
        S = S + alpha * _kron(f.eye_q, f.eye_p, *f.z_factors(m, j, f.z_number))
    return OperatorMatrix(S.tocsr(), "A*A", basis)


def assemble_generator(model: GleModel, basis: SpectralBasis) -> OperatorMatrix:
    """L = B + A*A."""
    B = assemble_transport(model, basis)
    S = assemble_dissipation(model, basis)
    L = (B.matrix + S.matrix).tocsr()
    L.eliminate_zeros()
    logger.info(f"Assembled generator: dim={basis.dim}, nnz={L.nnz}")
    return OperatorMatrix(L, "L", basis)


# ============================================================================
# Derivative operators
# ============================================================================


def derivative_operator(basis: SpectralBasis, variable: str) -> OperatorMatrix:
    """Plain partial derivative: ``q``, ``p`` or ``z<j>``."""
    f = FactorMatrices.build(basis)
    m = basis.m
    eye_z = [f.eye_z] * m
    if variable == "q":
        mat = _kron(f.q_derivative, f.eye_p, *eye_z)
    elif variable == "p":
        mat = _kron(f.eye_q, f.p_derivative, *eye_z)
    elif variable.startswith("z") and variable[1:].isdigit() and int(variable[1:]) < m:
        mat = _kron(f.eye_q, f.eye_p, *f.z_factors(m, int(variable[1:]), f.z_derivative))
    else:
        raise ValidationError(f"unknown derivative variable '{variable}'")
    return OperatorMatrix(mat, f"d_{variable}", basis)


def derivative_family(model: GleModel, basis: SpectralBasis) -> dict[str, list[OperatorMatrix]]:
    """Per-mode operators for the short-time estimates.

    A_j = -sqrt(alpha_j/beta) d_zj, C_j = lambda_j sqrt(alpha_j/beta) d_p and
    C2_j = lambda_j sqrt(alpha_j/beta) (lambda_j d_zj - d_q).
    """
    _check_model(model, basis)
    dq = derivative_operator(basis, "q").matrix
    dp = derivative_operator(basis, "p").matrix
    family: dict[str, list[OperatorMatrix]] = {"A": [], "C": [], "C2": []}
    for j, (lam, alpha) in enumerate(zip(model.lam, model.alpha)):
        s = math.sqrt(alpha / model.beta)
        dz = derivative_operator(basis, f"z{j}").matrix
        family["A"].append(OperatorMatrix(-s * dz, f"A_{j}", basis))
        family["C"].append(OperatorMatrix((lam * s * dp).tocsr(), f"C_{j}", basis))
        family["C2"].append(OperatorMatrix((lam * s * (lam * dz - dq)).tocsr(), f"C2_{j}", basis))
    return family


def family_norm(ops: list[OperatorMatrix], u: np.ndarray) -> float:
    """sqrt(sum_j ||X_j u||^2)."""
    return float(math.sqrt(sum(float(np.sum((op @ u) ** 2)) for op in ops)))


def structure_residuals(model: GleModel, basis: SpectralBasis) -> dict[str, float]:
    """Relative Frobenius residuals of the L = B + A*A structure."""
    B = assemble_transport(model, basis).matrix
    S = assemble_dissipation(model, basis).matrix
    L = assemble_generator(model, basis).matrix
    norm_B = max(sparse_norm(B), 1e-300)
    return {
        "antisymmetry": float(sparse_norm(B + B.T) / norm_B),
        "dissipation_symmetry": float(sparse_norm(S - S.T)),
        "dissipation_min_diag": float(S.diagonal().min()),
        "constant_column": float(np.abs(L[:, 0].toarray()).max()),
        "constant_row": float(np.abs(L[0, :].toarray()).max()),
    }
