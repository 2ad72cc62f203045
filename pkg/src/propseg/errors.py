"""Exception hierarchy shared across the package.

ConfigError and DataError are the two families the CLI maps to exit
codes (2 and 3 respectively); everything else is a plain ValueError
subclass raised at the offending call site.
"""


class ContractError(ValueError):
    """A caller violated a documented precondition."""


class DimensionError(ContractError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """A numeric operation left its mathematical domain (log of <= 0, ...)."""


class SingularMatrixError(ValueError):
    """Linear solve hit a pivot below the singularity threshold."""


class DegenerateGraphError(ValueError):
    """Affinity graph has a zero-degree vertex; normalization undefined."""


class ConfigError(ValueError):
    """Invalid configuration key, value, or combination."""


class DataError(ValueError):
    """Missing, unreadable, or semantically invalid data."""


class ParseError(DataError):
    """Malformed on-disk file; message carries the offending line number."""


class GenerationError(DataError):
    """Scene specification cannot be realized."""


class CheckpointError(DataError):
    """Checkpoint file is missing, truncated, or inconsistent."""
