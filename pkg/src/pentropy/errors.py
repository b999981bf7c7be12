"""Exception hierarchy shared by all pentropy modules."""


class PEntropyError(Exception):
    """Base class for every error raised by this package."""


class InvalidDistributionError(PEntropyError, ValueError):
    """A probability vector has negative entries or does not sum to one."""


class UnsupportedOperationError(PEntropyError):
    """The system cannot perform the requested computation (e.g. no exact joins)."""


class CombinatorialExplosionError(PEntropyError):
    """The join support would exceed the configured cap.

    Reduce |P_j| or the number of cells, or raise ``support_cap``.
    """


class NeedsDeeperStageError(PEntropyError):
    """An orbit leaves the stages built so far; build more stages and retry."""


class StageLimitError(PEntropyError):
    """Building the next stage would exceed the configured total-measure bound."""


class SynthesisFailure(PEntropyError):
    """Spacer synthesis could not produce a verified construction."""

    def __init__(self, message, first_failing_j=None):
        super().__init__(message)
        self.first_failing_j = first_failing_j


class InvalidMeasureError(PEntropyError, ValueError):
    """A spectral measure is not a symmetric probability measure."""


class IllConditionedCovarianceError(PEntropyError):
    """A covariance Gram matrix is indefinite beyond the clipping tolerance."""
