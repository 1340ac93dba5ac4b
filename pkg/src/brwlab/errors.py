class BrwError(Exception):
    """Base class for errors raised by brwlab."""


class ModelError(BrwError, ValueError):
    """Invalid model, law or configuration."""


class NoRootError(BrwError):
    """The log-Laplace transform has no positive root."""


class PrecisionError(BrwError):
    """A truncation bound exceeds the requested tolerance."""

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class UnsupportedError(BrwError):
    """The requested exact computation is not available for this input."""
