"""Exception hierarchy.

The CLI maps ``ConfigError`` to exit status 2 and ``DataError`` to exit
status 3; anything else is an internal error (exit 1).
"""


class VaeNmfError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VaeNmfError):
    """Invalid configuration, parameters or usage."""


class DataError(VaeNmfError):
    """Input data that cannot be processed (bad file, wrong shape, ...)."""


class WavFormatError(DataError):
    pass


class ChannelError(DataError):
    pass


class ShapeError(DataError):
    pass


class ModelFormatError(DataError):
    """Model file is truncated, corrupt or of an unknown version."""


class EmptyCorpusError(ConfigError):
    pass


class NonFiniteError(DataError):
    """A computation produced or received NaN/inf values.

    ``index`` locates the offending item (frame index, iteration) when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index
