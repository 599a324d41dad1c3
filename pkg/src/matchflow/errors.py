"""Exception types shared across the package."""


class MatchflowError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(MatchflowError):
    """An argument violates a documented precondition."""


class OutOfBoundsError(MatchflowError):
    """A coordinate lies outside the valid sampling domain."""


class FormatError(MatchflowError):
    """A file does not conform to its expected on-disk format."""


class DegenerateFitError(MatchflowError):
    """A model fit is rank deficient or numerically degenerate."""


class InterpolationImpossibleError(MatchflowError):
    """Too few matches remain to build any interpolation model."""


class UndefinedMetricError(MatchflowError):
    """A metric was requested over an empty evaluation set."""


class PipelineStageError(MatchflowError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
