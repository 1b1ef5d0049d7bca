"""Exception hierarchy shared by all modules.

Each class maps to one CLI exit code: parameter problems exit with 2, data
problems with 3 and numerical failures with 4.
"""


class FplsdaError(Exception):
    exit_code = 1


class ParameterError(FplsdaError, ValueError):
    """Invalid argument value or inconsistent dimensions."""

    exit_code = 2


class DataError(FplsdaError):
    """Input data violates a structural requirement."""

    exit_code = 3


class StructuralError(DataError):
    """Repeated-measures blocks are incomplete or inconsistent."""


class FitError(DataError):
    """A single curve could not be fitted by least squares."""


class NumericalError(FplsdaError, ArithmeticError):
    exit_code = 4


class DegenerateDataError(NumericalError):
    """No cross-covariance left to extract a component from."""


class RangeError(ParameterError):
    """Evaluation point outside the basis domain."""
