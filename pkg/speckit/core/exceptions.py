"""
Core exceptions for speckit.
Defines all custom exceptions used throughout the restoration pipeline.
"""


class SpeckitException(Exception):
    """Base exception for all speckit errors"""
    pass


class ConfigError(SpeckitException):
    """Configuration-related errors"""
    pass


class InvalidArgumentError(SpeckitException, ValueError):
    """Raised when a scalar or grid argument violates its precondition"""
    pass


class DimensionError(SpeckitException, ValueError):
    """Raised when grids or tabulations do not line up"""
    pass


class NumericError(SpeckitException):
    """Base class for numeric and convergence errors"""
    pass


class SolverBreakdownError(NumericError):
    """Raised when a regularized solve produces non-finite values"""
    pass


class EnvelopeFitError(NumericError):
    """Base class for envelope fitting errors"""
    pass


class NoMinimumError(EnvelopeFitError):
    """Raised when the error envelope has no interior minimum"""
    pass


class InfeasibleContactError(EnvelopeFitError):
    """Raised when the error curve lies below the data-error term of the envelope"""
    pass


class ContactRangeError(EnvelopeFitError):
    """Raised when contact iterates leave the tabulated alpha range"""
    pass


class NoContactError(EnvelopeFitError):
    """Raised when no truncation level in the scan grid dominates the curves"""
    pass


class ArtifactError(SpeckitException):
    """Base class for stage artifact (I/O) errors"""
    pass


class SpectrumFormatError(ArtifactError):
    """Raised when a spectrum or curve file cannot be parsed"""
    pass
