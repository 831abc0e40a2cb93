"""Exception hierarchy shared across the package."""


class BangError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(BangError, ValueError):
    """An argument violates a documented precondition."""


class FileFormatError(BangError, ValueError):
    """A file's contents do not match the declared format."""


class TruncatedFileError(BangError, OSError):
    """A file ended before the declared payload was complete."""
