"""Exception hierarchy.

Validation errors map to CLI exit code 2, numerical failures to exit code 3.
"""


class ValidationError(ValueError):
    """Input data or configuration violates a documented invariant."""


class MissingColumn(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class SharpDesignViolation(ValidationError):
    """A main-sample row has ``w != I(x >= c)``."""


class EmptySample(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class NumericalError(ArithmeticError):
    pass


class SingularSystem(NumericalError):
    """A penalized moment matrix is not positive definite."""


class NoSolution(NumericalError):
    """A discrete bridge equation has no exact solution."""
