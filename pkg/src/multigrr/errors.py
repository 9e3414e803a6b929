"""Exception types shared across the package."""


class GrrError(Exception):
    """Base class for all package errors."""


class DomainError(GrrError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class ParameterError(GrrError, ValueError):
    """A parameter violates the documented preconditions."""


class ModelError(GrrError, ArithmeticError):
    """A covariance model is invalid or cannot be factorized."""


class ResolutionError(GrrError, RuntimeError):
    """A discrete search could not be realized at the available grid resolution."""


class DivergenceError(GrrError, ArithmeticError):
    """An integral or expectation is infinite."""


class HypothesisError(GrrError, ValueError):
    """Input data violate a structural hypothesis (e.g. vanishing on axes)."""


class BoundViolation(GrrError, AssertionError):
    """A proven inequality was found violated beyond numerical tolerance."""
