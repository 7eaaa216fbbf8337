"""Exception types shared across the package."""


class MatchforgeError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(MatchforgeError):
    """Schema is malformed or does not match the data file."""


class ValidationError(MatchforgeError):
    """Cell values violate a domain constraint (e.g. non-binary treatment)."""


class UnimputableError(MatchforgeError):
    """A column has no observed values to impute from."""


class SingleArmError(MatchforgeError):
    """Both treatment arms are required but one is empty."""


class InfiniteEffectError(MatchforgeError):
    """Effect size is unbounded (zero pooled spread with unequal means)."""


class UndefinedTauError(MatchforgeError):
    """Kendall's tau is undefined (an input vector is fully tied)."""


class ConvergenceError(MatchforgeError):
    """An iterative optimizer hit its iteration cap."""

    def __init__(self, message: str, iterations: int) -> None:
        super().__init__(message)
        self.iterations = iterations


class NoModelError(MatchforgeError):
    """No candidate propensity model produced a usable fit."""


class NoSelectionError(MatchforgeError):
    """A selection strategy found no eligible candidate."""


class A2AUnavailableError(MatchforgeError):
    """Too few bootstrap replicates succeeded to report an A2A value."""
