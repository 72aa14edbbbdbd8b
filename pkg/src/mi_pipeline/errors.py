"""Exception types shared across the pipeline.

The CLI maps these onto exit codes (config 2, data 3, numerical 4), so
library code should raise the most specific type that applies.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PipelineError, ValueError):
    """Invalid configuration: bad band limits, network shapes, CLI options."""


class DataError(PipelineError, ValueError):
    """Invalid or inconsistent data: shapes, labels, sampling rates, files."""


class NumericalError(PipelineError, ArithmeticError):
    """Numerical failure: singular covariance, unstable filter, divergence."""
