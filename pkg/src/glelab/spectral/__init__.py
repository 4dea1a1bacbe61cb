"""Spectral Galerkin discretization of the generator.

Public API:
    - build_basis / SpectralBasis: Tensor basis (q, p, z), constant first
    - assemble_generator: L = B + A*A as a sparse OperatorMatrix
    - solve_poisson, diffusion_from_poisson: Poisson route to D
    - semigroup_apply, spectral_gap, short_time_scan: Semigroup tools
    - commutator_table: Symbolic identities behind the short-time families
"""

from .basis import SpectralBasis, build_basis, evaluate_expansion
from .operators import OperatorMatrix, assemble_generator, derivative_family
from .solvers import (
    diffusion_from_poisson,
    semigroup_apply,
    short_time_scan,
    solve_poisson,
    spectral_gap,
)
from .symbolic import DiffOp, commutator, commutator_table

__all__ = [
    "SpectralBasis",
    "build_basis",
    "evaluate_expansion",
    "OperatorMatrix",
    "assemble_generator",
    "derivative_family",
    "solve_poisson",
    "diffusion_from_poisson",
    "semigroup_apply",
    "spectral_gap",
    "short_time_scan",
    "DiffOp",
    "commutator",
    "commutator_table",
]
