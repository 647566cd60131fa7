"""Exception hierarchy.

The three base classes map onto CLI exit codes: usage errors exit 1, data
errors exit 2, transport errors exit 3.
"""


class MtevalError(Exception):
    exit_code = 2


class UsageError(MtevalError):
    exit_code = 1


class DataError(MtevalError):
    exit_code = 2


class TransportError(MtevalError):
    exit_code = 3
