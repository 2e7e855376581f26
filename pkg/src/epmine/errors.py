"""Exception hierarchy.

Every error raised by the package derives from :class:`EpmineError`.  The three
intermediate classes map onto the CLI exit codes (config 2, data 3, numeric 4).
"""


class EpmineError(Exception):
    exit_code = 1


class ConfigError(EpmineError, ValueError):
    exit_code = 2


class DataError(EpmineError, ValueError):
    exit_code = 3


class NumericError(EpmineError, ArithmeticError):
    exit_code = 4


class ParseError(DataError):
    def __init__(self, message, line=None, offset=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.offset = offset


class DimensionMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class EmptyDataset(DataError):
    pass


class TooFewClasses(DataError):
    pass


class NoPositivePair(DataError):
    pass


class GenerationFailure(DataError):
    pass


class KTooLarge(DataError):
    pass


class ZeroRow(NumericError):
    def __init__(self, index):
        super().__init__(f"row {index} has (numerically) zero norm")
        self.index = index


class DomainError(NumericError):
    pass


class EmptyNegatives(NumericError):
    pass


class NoValidTriplet(NumericError):
    pass


class DegenerateCovariance(NumericError):
    pass
