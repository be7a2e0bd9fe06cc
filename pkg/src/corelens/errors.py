"""Exception taxonomy shared by the library and the CLI.

Exit codes follow the CLI contract: 2 config, 3 data, 4 numerical.
"""


class CorelensError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(CorelensError):
    """Invalid configuration: bad fields, missing seeds, bad fractions."""

    exit_code = 2


class DataError(CorelensError):
    """Invalid data values: non-finite rows, out-of-range ids, dim mismatch."""

    exit_code = 3


class FormatError(DataError):
    """Malformed file bytes: bad magic, truncated header, wrong version."""


class ConsistencyError(DataError):
    """Payload and metadata disagree (e.g. label count vs row count)."""


class RankError(DataError):
    """A supplied background vector is linearly dependent on earlier ones."""


class TrainingError(DataError):
    """Training preconditions violated: absent class, empty group."""


class NumericalError(CorelensError):
    """Numerical failure: ill-conditioned solve, diverging optimization."""

    exit_code = 4


class ConditioningError(NumericalError):
    """Gram matrix too ill-conditioned to invert reliably."""


class DivergenceError(NumericalError):
    """Optimization produced a non-finite loss; carries the loss trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
