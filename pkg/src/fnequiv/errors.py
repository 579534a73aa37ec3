"""Exception types shared across the package.

The CLI maps these to exit code 1 (user/domain errors); anything else that
escapes is treated as an internal error (exit code 2).
"""


class FnequivError(Exception):
    """Base class for all package errors."""


class ShapeError(FnequivError):
    """Structural mismatch: array shapes, layer counts, or dimensions disagree."""


class NumericError(FnequivError):
    """A computation produced a non-finite value.

    Carries the 1-based layer index at which the overflow/NaN appeared,
    when known.
    """

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class DomainError(FnequivError):
    """An argument is outside the mathematical domain of the operation."""


class ConfigError(FnequivError):
    """A configuration object is invalid for the requested computation."""


class UnsupportedTransformError(FnequivError):
    """The activation at the targeted layer does not admit this transform."""


class BudgetExceededError(FnequivError):
    """An enumeration would exceed the configured budget.

    ``required`` reports the size the request would have needed.
    """

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class IntegrationFailureError(FnequivError):
    """Numerical integration diverged; ``partial_value`` holds the integral
    over the truncated range that was still computable."""

    def __init__(self, message, partial_value=None):
        super().__init__(message)
        self.partial_value = partial_value
