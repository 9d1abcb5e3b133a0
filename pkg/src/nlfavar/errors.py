"""Exception hierarchy shared by every module."""


class FavarError(Exception):
    """Base class for all package errors."""


class FormatError(FavarError, ValueError):
    """Malformed input file."""


class DateError(FavarError, ValueError):
    """Date index is not a strictly increasing quarterly sequence."""


class CodeError(FavarError, ValueError):
    """Unknown transformation code."""


class DomainError(FavarError, ValueError):
    """Value outside the domain of a transformation (e.g. log of a nonpositive)."""


class DegenerateSeriesError(FavarError, ValueError):
    """Series with zero variance or otherwise unusable."""


class MetadataError(FavarError, ValueError):
    """Missing, duplicate or inconsistent series metadata."""


class DimensionError(FavarError, ValueError):
    """Incompatible array shapes or ranks."""


class ParameterError(FavarError, ValueError):
    """Invalid argument value."""


class DivergenceError(FavarError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class SamplerError(FavarError, RuntimeError):
    """MCMC sampler failure."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)


class IdentificationError(FavarError, RuntimeError):
    """Structural identification failed."""


class AlignmentError(FavarError, ValueError):
    """Objects that must share an index do not."""


class OriginError(FavarError, RuntimeError):
    """Failure inside one forecast origin; carries the origin index."""

    def __init__(self, origin, cause):
        self.origin = origin
        self.cause = cause
        super().__init__(f"forecast origin {origin}: {type(cause).__name__}: {cause}")
