"""Exception taxonomy.

Every error carries an ``exit_code`` so the CLI can map failures to distinct
process exit statuses: 2 usage (argparse), 3 validation, 4 data, 5 numerical.
"""


class BayesmcError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InvalidParameterError(BayesmcError):
    """A parameter value violates its documented domain."""

    exit_code = 3


class DimensionError(InvalidParameterError):
    """Array shapes are incompatible with the declared model or data."""

    exit_code = 3


class DataError(BayesmcError):
    """A dataset file is missing, unparseable, or inconsistent."""

    exit_code = 4


class NumericalError(BayesmcError):
    """A computation produced no usable numeric result."""

    exit_code = 5


class UndefinedDiagnosticError(NumericalError):
    """A diagnostic is undefined for the given samples (e.g. zero variance)."""

    exit_code = 5
