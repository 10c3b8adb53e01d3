"""Simulation and energy auditing of mechanical systems with nonlinear nonholonomic constraints."""

from .core import (
    ChartDims,
    ConstraintSet,
    EmbeddingModel,
    EnergyModel,
    KinematicState,
    Structure,
    SystemSpec,
    classify_constraints,
    classify_system,
    validate,
)
from .errors import (
    ConfigurationError,
    FallbackWarning,
    FormulationError,
    InadmissibleStateError,
    NonholonomicError,
    NotApplicableError,
    SingularityError,
)

__all__ = [
    "ChartDims",
    "ConstraintSet",
    "EmbeddingModel",
    "EnergyModel",
    "KinematicState",
    "Structure",
    "SystemSpec",
    "classify_constraints",
    "classify_system",
    "validate",
    "ConfigurationError",
    "FallbackWarning",
    "FormulationError",
    "InadmissibleStateError",
    "NonholonomicError",
    "NotApplicableError",
    "SingularityError",
]
