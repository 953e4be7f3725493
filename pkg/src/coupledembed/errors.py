"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so keep the split between
configuration, data, and numeric failures intact.
"""


class CoupledEmbedError(Exception):
    """Base class for all package errors."""


class ConfigError(CoupledEmbedError):
    """Invalid configuration: bad value, unknown key, inconsistent dims."""


class DataError(CoupledEmbedError):
    """Malformed or inconsistent dataset input."""


class NumericError(CoupledEmbedError):
    """Numerical failure: non-convergence, non-PSD input, non-finite loss."""
