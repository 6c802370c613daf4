"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input violates the mathematical preconditions of an operation."""


class NumericError(ArithmeticError):
    """A computation produced NaN or Inf values."""
