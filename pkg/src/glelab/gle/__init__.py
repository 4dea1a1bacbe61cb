"""GLE models: potentials, the Markovian embedding and its kernel.

Public API:
    - GleModel, State, StateBatch: Model parameters and phase-space states
    - build_model: Validated GleModel from a ModelConfig
    - build_potential, register_potential, list_potentials: Potential registry
    - kernel_eval, kernel_mass: Memory kernel and friction coefficient
    - canonical_embedding, check_fdt: Fluctuation-dissipation check
    - confining_admissibility: Growth conditions for confining potentials

Example:
    >>> from glelab.gle import GleModel, build_potential, kernel_mass
    >>>
    >>> model = GleModel(lam=(1.0,), alpha=(2.0,), beta=1.0,
    ...                  potential=build_potential({"kind": "cosine"}))
    >>> kernel_mass(model)
    0.5
"""

from .admissibility import AdmissibilityReport, ConditionVerdict, confining_admissibility
from .model import (
    FdtReport,
    GleModel,
    State,
    StateBatch,
    build_model,
    canonical_embedding,
    check_fdt,
    is_free,
    kernel_eval,
    kernel_mass,
)
from .potentials import (
    Potential,
    build_potential,
    gradient_mismatch,
    list_potentials,
    register_potential,
)

__all__ = [
    "GleModel",
    "State",
    "StateBatch",
    "build_model",
    "is_free",
    "kernel_eval",
    "kernel_mass",
    "FdtReport",
    "check_fdt",
    "canonical_embedding",
    "Potential",
    "build_potential",
    "register_potential",
    "list_potentials",
    "gradient_mismatch",
    "AdmissibilityReport",
    "ConditionVerdict",
    "confining_admissibility",
]
