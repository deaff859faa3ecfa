"""Exception types shared across the package."""


class CMBertError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CMBertError, ValueError):
    pass


class DimensionError(CMBertError, ValueError):
    pass


class InputError(CMBertError, ValueError):
    pass


class CheckpointError(CMBertError):
    pass


class NonFiniteGradientError(CMBertError, FloatingPointError):
    pass


class TrainingAborted(CMBertError):
    """Raised when the loss goes non-finite; carries the last good checkpoint."""

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class OntologyParseError(CMBertError, ValueError):
    pass
