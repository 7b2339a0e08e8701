"""
Maximum-principle checks run against a simulated trajectory.

Each check has a narrow, well-defined role:
- mp_harness: distance field, weak and strong maximum principle, coefficient fields
- viscosity: the ell inequality and the supersolution property of d-bar
"""

from .mp_harness import (
    CompatibilityViolation,
    DistanceField,
    CoefficientFields,
    distance_field,
    dump_node_fields,
    effective_coefficients,
    gamma_field,
    strong_mp_check,
    summarize_coefficients,
    weak_mp_check,
)
from .viscosity import (
    NiceQuadruple,
    TouchingQuadratic,
    ell_report,
    ell_residuals,
    layer_consistency_gap,
    nice_quadruple,
    residual_tolerance,
    supersolution_check,
    touching_candidates,
)

__all__ = [
    "CompatibilityViolation",
    "DistanceField",
    "CoefficientFields",
    "distance_field",
    "dump_node_fields",
    "effective_coefficients",
    "gamma_field",
    "strong_mp_check",
    "summarize_coefficients",
    "weak_mp_check",
    "NiceQuadruple",
    "TouchingQuadratic",
    "ell_report",
    "ell_residuals",
    "layer_consistency_gap",
    "nice_quadruple",
    "residual_tolerance",
    "supersolution_check",
    "touching_candidates",
]
