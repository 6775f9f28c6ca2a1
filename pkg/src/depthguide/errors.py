"""Exception types shared across the package."""


class DepthGuideError(Exception):
    """Base class for all package errors."""


class FormatError(DepthGuideError, ValueError):
    """A file could not be parsed. ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class DuplicateCoordinateError(DepthGuideError, ValueError):
    pass


class OutOfBoundsError(DepthGuideError, ValueError):
    pass


class DimensionMismatchError(DepthGuideError, ValueError):
    pass


class EmptyDomainError(DepthGuideError, ValueError):
    """No pixel survived the validity / depth-threshold mask."""


class InsufficientPixelsError(DepthGuideError, ValueError):
    """Fewer valid pixels than the requested sampling budget."""


class DegenerateSitesError(DepthGuideError, ValueError):
    """Sample sites cannot be triangulated (too few or collinear)."""


class PredictionError(DepthGuideError):
    """A predictor failed inside a Monte-Carlo loop; ``iteration`` is 1-based."""

    def __init__(self, message: str, iteration: int):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")


class InfeasibleSceneError(DepthGuideError, ValueError):
    pass


class MissingInputError(DepthGuideError, ValueError):
    pass


class FamilyError(DepthGuideError):
    """Failure while evaluating one pattern family; ``family`` names it."""

    def __init__(self, family: str, cause: Exception):
        self.family = family
        self.cause = cause
        super().__init__(f"[{family}] {cause}")
