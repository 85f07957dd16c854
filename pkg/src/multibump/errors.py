"""Exception types shared across the package."""

from __future__ import annotations


class MultibumpError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(MultibumpError, ValueError):
    pass


class MissingContextError(MultibumpError, ValueError):
    pass


class AmbiguousMembershipError(MultibumpError, ValueError):
    """Point has zero projection onto the cell plane."""


class DivergenceError(MultibumpError, ValueError):
    pass


class SingularGradientError(MultibumpError, ValueError):
    pass


class InvalidSpecError(MultibumpError, ValueError):
    pass


class ConvergenceError(MultibumpError, RuntimeError):
    """Tolerance not reached; ``result`` holds the best estimate."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class DegenerateConfigurationError(MultibumpError, ValueError):
    pass


class NoBalanceError(MultibumpError, ValueError):
    pass


class FitError(MultibumpError, ValueError):
    pass


class BoundaryHitError(MultibumpError, RuntimeError):
    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class NonDecayingFieldError(MultibumpError, RuntimeError):
    pass
