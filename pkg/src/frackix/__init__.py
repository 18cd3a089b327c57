"""Fractional chemotaxis: kinetic Monte Carlo, macroscopic solver and boundary-layer tools."""

__version__ = "0.1.0"

from .errors import (ArgumentError, ConfigurationError, DegeneracyError, DomainError,  # noqa: E402
                     FrackixError, GeometryError, InvariantError, NumericalError,
                     RunawayError, SamplerError, StabilityError, ValidationError)
from .kinetic import (ChemicalField, ModelParams, SphereQuadrature, TurnKernel,  # noqa: E402
                      eigenvalue_nu1, gamma_reflection, kernel_normalization,
                      macro_constants, sample_direction, sample_run_time,
                      scaling_exponents, specular_reflect, sphere_area)

__all__ = [
    "ArgumentError", "ChemicalField", "ConfigurationError", "DegeneracyError",
    "DomainError", "FrackixError", "GeometryError", "InvariantError", "ModelParams",
    "NumericalError", "RunawayError", "SamplerError", "SphereQuadrature",
    "StabilityError", "TurnKernel", "ValidationError", "eigenvalue_nu1",
    "gamma_reflection", "kernel_normalization", "macro_constants", "sample_direction",
    "sample_run_time", "scaling_exponents", "specular_reflect", "sphere_area",
]
