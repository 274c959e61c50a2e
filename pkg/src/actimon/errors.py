"""Error taxonomy shared by every actimon module.

Each family carries a distinct process exit code so CLI failures are
machine-distinguishable (missing input vs schema mismatch vs corrupt model).
"""


class ActimonError(Exception):
    exit_code = 1


class InputError(ActimonError):
    """Missing or unreadable input file/path."""

    exit_code = 2


class SchemaError(ActimonError):
    """Feature schema or model dimensionality mismatch."""

    exit_code = 3


class ModelError(ActimonError):
    """Corrupt, unparseable, or incompatible model file."""

    exit_code = 4


class DataError(ActimonError):
    """Dataset does not satisfy a training contract (missing class, too few samples)."""

    exit_code = 5


class InsufficientDataError(DataError):
    """Window or series too short for the requested operation."""

    exit_code = 5


class ParameterError(ActimonError):
    """Out-of-range or inconsistent configuration parameter."""

    exit_code = 6


class StreamError(ActimonError):
    """Violation of stream ordering/consistency contracts."""

    exit_code = 7
