"""Exception types raised across the package."""


class ItergaussError(ValueError):
    """Base class for all domain errors."""


class InvalidDimensionError(ItergaussError):
    pass


class DegenerateSpectrumError(ItergaussError):
    """The requested spectrum is the identity (already Gaussianized)."""


class SpectrumRejectedError(ItergaussError):
    """A shifted spectrum produced a non-positive eigenvalue."""


class DomainError(ItergaussError):
    """Input outside the mathematical domain of an operation."""


class FitError(ItergaussError):
    """Too few (distinct) samples to fit a monotone transform."""


class UndefinedRateError(ItergaussError):
    """A convergence rate was requested from a non-positive loss curve."""
