"""Exception hierarchy shared across the package."""


class FaceFitError(Exception):
    """Base class for all package-specific errors."""


class ModelFormatError(FaceFitError):
    """Base class for model-file problems."""


class BadMagicError(ModelFormatError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(ModelFormatError):
    """Payload is shorter (or longer) than the header promises."""


class InvariantViolationError(ModelFormatError):
    """Loaded or constructed data breaks a model invariant."""


class DimensionMismatchError(FaceFitError):
    """Array sizes do not agree with the model configuration."""


class FittingDomainError(FaceFitError):
    """Optimization left the valid domain (e.g. vertex behind the camera).

    Carries the iteration index at which the failure occurred, when known.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateInputError(FaceFitError):
    """Geometric input too degenerate to solve (e.g. collinear align points)."""
