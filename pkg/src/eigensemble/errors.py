"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to converge or a cross-check disagreed."""
