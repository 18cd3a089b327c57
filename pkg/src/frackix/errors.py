"""Exception hierarchy.

Every error carries a short machine-readable ``category`` which the CLI
reports alongside a nonzero exit status.
"""


class FrackixError(Exception):
    category = "error"


class ConfigurationError(FrackixError, ValueError):
    category = "configuration"


class ValidationError(FrackixError, ValueError):
    category = "validation"


class DomainError(FrackixError, ValueError):
    category = "domain"


class ArgumentError(FrackixError, ValueError):
    category = "argument"


class GeometryError(FrackixError, ValueError):
    category = "geometry"


class NumericalError(FrackixError, ArithmeticError):
    category = "numerical"


class StabilityError(NumericalError):
    category = "stability"


class DegeneracyError(NumericalError):
    category = "degeneracy"


class RunawayError(FrackixError, RuntimeError):
    category = "runaway"


class SamplerError(FrackixError, RuntimeError):
    category = "sampler"


class InvariantError(FrackixError, AssertionError):
    """An internal invariant was violated (a bug, not bad input)."""

    category = "internal"
