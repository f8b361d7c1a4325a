"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: configuration problems exit
with 2, malformed or degenerate data with 3, numerical failures with 4.
Plain ``ValueError`` is used for out-of-range arguments to individual
operations.
"""


class PoolInferError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(PoolInferError):
    """Invalid mechanism, scenario, or attack configuration."""


class DataError(PoolInferError):
    """Malformed input data (event logs, observation files, records)."""


class DegenerateEvidenceError(DataError):
    """Evidence that cannot support inference (e.g. an all-zero likelihood row)."""


class NumericalError(PoolInferError):
    """A numerical procedure failed (non-convergence, ill-conditioning)."""
