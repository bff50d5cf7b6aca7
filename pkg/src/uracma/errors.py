"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid problem definition, bounds or hyperparameters."""


class NumericalError(ArithmeticError):
    """Loss of symmetry/positive definiteness or non-finite internal state."""


class EvaluationError(ArithmeticError):
    """An objective returned a non-finite value or received non-finite input."""
