"""Exception types shared across the package."""


class FxSearcherError(Exception):
    """Base class for all package errors."""


class UnsupportedFormatError(FxSearcherError):
    """WAV file uses a codec this reader does not handle."""


class CorruptFileError(FxSearcherError):
    """WAV file is structurally damaged (truncated or missing chunks)."""


class ParamValidationError(FxSearcherError):
    """A parameter value or parameter file failed validation."""


class BackendTransportError(FxSearcherError):
    """Embedding backend unreachable after all retries."""


class BackendProtocolError(FxSearcherError):
    """Embedding backend answered with a malformed or error response."""


class GpFitError(FxSearcherError):
    """Gaussian-process fitting could not produce a usable model."""


class OptimizationAborted(FxSearcherError):
    """Search stopped because the objective kept failing."""
