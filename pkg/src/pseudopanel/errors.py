"""Exception hierarchy shared across the package.

Two families matter to callers: ``ValidationError`` (bad inputs, bad
configuration — CLI exit code 2) and ``NumericalError`` (the inputs were
well formed but the computation degenerated — CLI exit code 3).
"""


class PseudopanelError(Exception):
    """Base class for all package errors."""


class ValidationError(PseudopanelError):
    """Invalid input data or configuration."""


class NumericalError(PseudopanelError):
    """A numerically degenerate problem (rank loss, singularity, divergence)."""


# --- data -----------------------------------------------------------------

class MissingColumnError(ValidationError):
    pass


class DuplicateUnitWaveError(ValidationError):
    pass


class NonNumericCellError(ValidationError):
    pass


class ShareRangeError(ValidationError):
    pass


class NoAdultError(ValidationError):
    pass


class EmptyResultError(ValidationError):
    pass


# --- pseudo ---------------------------------------------------------------

class UncoveredAgeError(ValidationError):
    pass


class EmptyCellError(ValidationError):
    pass


# --- regress --------------------------------------------------------------

class RankDeficientError(NumericalError):
    """Design matrix is rank deficient; carries the offending column names."""

    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"rank-deficient design; collinear columns: {self.columns}")


class NonPositiveWeightError(ValidationError):
    pass


class NotPositiveDefiniteError(NumericalError):
    pass


class SingularSigmaError(NumericalError):
    pass


# --- estimators -----------------------------------------------------------

class NotIdentifiedError(NumericalError):
    pass


# --- diagnostics ----------------------------------------------------------

class SingularVError(NumericalError):
    pass


# --- demand ---------------------------------------------------------------

class NonPositivePriceError(ValidationError):
    pass


class NoConvergenceError(NumericalError):
    """Outer iteration failed to converge; ``trace`` holds the iteration log."""

    def __init__(self, message, trace=None):
        self.trace = trace or []
        super().__init__(message)


class ZeroShareError(ValidationError):
    pass


class ZeroPriceElasticityError(ValidationError):
    pass


# --- mc -------------------------------------------------------------------

class ConfigInvalidError(ValidationError):
    pass


# --- iv -------------------------------------------------------------------

class WeakInstrumentsWarning(UserWarning):
    """First-stage F below the reporting threshold (a convention, not fatal)."""
