"""Exception taxonomy shared by the library and the CLI.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class RespiraError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class UsageError(RespiraError):
    """Bad configuration, flags, or arguments."""

    exit_code = 1


class DataError(RespiraError):
    """Malformed or inconsistent input data (annotations, audio, caches)."""

    exit_code = 2


class NumericalError(RespiraError):
    """Numerical failure (non-finite loss, singular kernel, ...)."""

    exit_code = 3
