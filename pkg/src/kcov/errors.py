"""Exception types shared across the toolkit."""


class KcovError(Exception):
    """Base class for every error raised by this package."""


class NonFiniteError(KcovError):
    """A computation received or produced NaN/Inf values."""


class NoConvergenceError(KcovError):
    """An iterative solver exhausted its budget before converging."""


class NotPositiveDefiniteError(KcovError):
    """A matrix expected to be (shifted) positive definite was not.

    Carries the offending minimum eigenvalue when known.
    """

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class DimMismatchError(KcovError):
    """Operands have incompatible dimensions."""


class DegenerateTrialError(KcovError):
    """A trial has too few frames for covariance estimation (T < 2)."""


class ProbeCountExceedsDimError(KcovError):
    """More probe vectors requested than the data space has dimensions."""


class InvalidBaseError(KcovError):
    """Degree-distribution base must satisfy p > 1."""


class TooShortError(KcovError):
    """Trial too short for the requested finite-difference stencil."""


class UnusableTrialError(KcovError):
    """Trial has fewer than two valid frames after cleaning."""


class MalformedFileError(KcovError):
    """A data file does not follow its documented layout."""


class SchemaError(KcovError):
    """A structured record violates the canonical trial schema."""


class UnknownSubjectError(KcovError):
    """A subject id is not covered by the named train/test lists."""


class EmptyFoldError(KcovError):
    """A cross-validation fold contains no trials."""


class DegenerateLabelsError(KcovError):
    """Training labels do not form at least two non-empty classes."""


class ShapeMismatchError(KcovError):
    """A precomputed kernel block does not match the model's training set."""
