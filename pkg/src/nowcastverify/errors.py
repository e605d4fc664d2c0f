"""Exception types shared across the toolkit.

Everything derives from :class:`NowcastVerifyError` so callers can catch the
package's failures with a single except clause.  Plain ``ValueError`` is used
for ordinary argument mistakes (negative rates, bad alpha, empty score lists);
the classes below mark conditions that calling code may want to distinguish.
"""


class NowcastVerifyError(Exception):
    """Base class for all toolkit-specific errors."""


class IngestionError(NowcastVerifyError):
    """Raw radar input could not be converted to a canonical field."""


class RangeError(NowcastVerifyError):
    """A requested crop or index does not fit inside its source grid."""


class ConfigError(NowcastVerifyError):
    """Configuration values are inconsistent with the data or each other."""


class FormatError(NowcastVerifyError):
    """A binary or text input file violates its format contract."""


class EmptyDataError(NowcastVerifyError):
    """A computation received no valid (unmasked, positively weighted) data."""


class UndefinedScoreError(NowcastVerifyError):
    """A score's denominator is zero, so the score does not exist."""


class DegenerateVarianceError(NowcastVerifyError):
    """Correlation requested for data with zero weighted variance."""


class InvalidWeightError(NowcastVerifyError):
    """Weights or inclusion probabilities outside their legal range."""


class EnsembleSizeError(NowcastVerifyError):
    """An ensemble is too small for the requested estimator."""


class MaskedFrameError(NowcastVerifyError):
    """An operation that needs a fully observed frame got masked cells."""


class InsufficientDataError(NowcastVerifyError):
    """Too few units (weeks, examples) to carry out a statistical test."""


class ShiftEstimationError(NowcastVerifyError):
    """Motion estimation failed because no shift had a valid overlap."""


class AlignmentError(NowcastVerifyError):
    """Forecast and observation collections do not line up."""
