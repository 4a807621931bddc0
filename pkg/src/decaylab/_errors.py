"""Exception hierarchy shared by every module."""


class DecayLabError(Exception):
    """Base class for all errors raised by decaylab."""


class DomainError(DecayLabError, ValueError):
    """An argument lies outside the domain of a mathematical map."""


class ConfigError(DecayLabError, ValueError):
    """Inconsistent or invalid configuration."""


class NumericalFailure(DecayLabError, RuntimeError):
    """An iterative solve or a resolution requirement failed."""


class ResolutionError(NumericalFailure):
    """A sampled trajectory is too coarse for the requested quadrature.

    Attributes
    ----------
    required_stride : float
        Largest admissible sampling interval.
    """

    def __init__(self, message, required_stride):
        super().__init__(message)
        self.required_stride = required_stride


class NotYetValidError(DomainError):
    """A decay envelope was requested before its validity threshold."""

    def __init__(self, message, threshold):
        super().__init__(message)
        self.threshold = threshold
