"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, CheckpointError -> 3,
NumericError -> 4.
"""


class CodressError(Exception):
    """Base class for package errors."""


class ConfigError(CodressError):
    """Invalid or unresolvable configuration."""


class SchemaError(CodressError):
    """Observation/action layout mismatch."""


class CheckpointError(CodressError):
    """Checkpoint missing, corrupt, or incompatible."""


class NumericError(CodressError):
    """Non-finite values where finite ones are required."""


class GeometryError(CodressError):
    """Degenerate geometric configuration."""
