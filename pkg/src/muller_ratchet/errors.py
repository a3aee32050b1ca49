"""Exception hierarchy.

Every error raised by the package derives from :class:`RatchetError`. Each
family carries an ``exit_code`` used by the command line runner.
"""


class RatchetError(Exception):
    exit_code = 1


class ParameterError(RatchetError, ValueError):
    exit_code = 2


class ValidationError(ParameterError):
    exit_code = 2


class ParseError(RatchetError, ValueError):
    exit_code = 3

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class NumericalError(RatchetError, ArithmeticError):
    exit_code = 4


class OverflowRisk(NumericalError):
    pass


class NormalizationDrift(NumericalError):
    pass


class DimensionMismatch(RatchetError, ValueError):
    exit_code = 5


class SamplingError(RatchetError):
    exit_code = 6


class EmptyPopulation(SamplingError):
    pass


class AllPathsKilled(SamplingError):
    pass


class DegenerateWeights(SamplingError):
    pass


class UnsupportedDirection(RatchetError, ValueError):
    exit_code = 7
