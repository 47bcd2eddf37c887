"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class SlipstabError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SlipstabError):
    """Invalid configuration, parameter table, or profile definition."""


class DataError(SlipstabError):
    """Invalid, missing, or inconsistent input data."""


class NumericalError(SlipstabError):
    """A numerical routine failed (singular system, non-convergence, ...)."""
