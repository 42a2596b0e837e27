"""Exception hierarchy shared by the pipeline modules and the CLI.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, anything else (including InvariantError) -> 4.
"""


class EmgraspError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EmgraspError):
    """Invalid configuration value or unusable parameter combination."""


class DataError(EmgraspError):
    """Input data violates a precondition or an on-disk schema."""


class InvariantError(EmgraspError):
    """An internal invariant failed; indicates a bug, not bad input."""


class FilterDesignError(ConfigError):
    """Filter design parameters are out of range or inconsistent."""


class DegenerateMvcError(DataError):
    """An MVC channel has a non-positive envelope maximum and cannot normalize."""


class SingularityError(DataError):
    """A segment covariance is singular; regularization is required."""
