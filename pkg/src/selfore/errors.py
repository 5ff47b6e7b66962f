"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage/config problems exit 1, data
problems exit 2, numeric failures exit 3.
"""


class SelforeError(Exception):
    pass


class ConfigError(SelforeError):
    """Bad configuration: unknown key, invalid value, inconsistent settings."""


class DataError(SelforeError):
    """Bad input data: malformed records, format violations, misalignment."""


class NumericsError(SelforeError):
    """Numeric failure: shape mismatch, non-finite values, diverged training."""
