"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class NumericError(ArithmeticError):
    """A numerical evaluation produced a non-finite or unusable value."""


class NoRootError(NumericError):
    """A root could not be bracketed."""


class DegenerateError(NumericError):
    """A ratio's denominator vanished (e.g. a flat second derivative)."""
