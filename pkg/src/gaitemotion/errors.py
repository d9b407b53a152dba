"""Exception hierarchy shared by all modules.

Everything a caller can fix by supplying different input derives from
``DataError``; the CLI maps those to exit code 2.
"""


class DataError(Exception):
    """Bad or inconsistent input data."""


class ParseError(DataError):
    """Malformed file contents.

    ``line`` and ``field`` locate the problem when known.
    """

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field


class SchemaError(DataError):
    """Well-formed input that violates a structural invariant."""


class MappingError(DataError):
    """A joint map does not cover the canonical skeleton."""


class CycleDetectionError(DataError):
    """Fewer than two foot strikes were found."""


class InsufficientFramesError(DataError):
    pass


class ReferentialError(DataError):
    """A record refers to an unknown gait."""


class DegenerateModelError(DataError):
    """Training data cannot produce a usable classifier."""


class ModelVersionError(DataError):
    pass


class EmptyBucketError(DataError):
    """No gait is associated with the requested emotion."""
