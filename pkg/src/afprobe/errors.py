"""Exception hierarchy shared by all afprobe modules."""


class AfprobeError(Exception):
    """Base class for every error raised by this package."""


class DataError(AfprobeError):
    """Invalid input data: malformed files, inconsistent shapes, bad labels.

    The CLI maps this to exit code 2.
    """


class InternalError(AfprobeError):
    """A violated internal invariant; indicates a bug, not bad input.

    The CLI maps this to exit code 3.
    """
