"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the command line
can print ``error[CODE]: message`` without a lookup table.
"""


class IlpError(Exception):
    code = "ILP"


class IlpValueError(IlpError, ValueError):
    code = "INVALID"


class DimensionMismatch(IlpValueError):
    code = "DimensionMismatch"


class IndexOutOfRange(IlpValueError):
    code = "IndexOutOfRange"


class DuplicateEntry(IlpValueError):
    code = "DuplicateEntry"


class DuplicateIndex(IlpValueError):
    code = "DuplicateIndex"


class NonFiniteValue(IlpValueError):
    code = "NonFiniteValue"


class NonPositiveTemperature(IlpValueError):
    code = "NonPositiveTemperature"


class NonPositivePenalty(IlpValueError):
    code = "NonPositivePenalty"


class InsufficientSupport(IlpValueError):
    code = "InsufficientSupport"


class InvalidRange(IlpValueError):
    code = "InvalidRange"


class ZeroChains(IlpValueError):
    code = "ZeroChains"


class ConfigInvalid(IlpValueError):
    code = "ConfigInvalid"


class InvalidAffinity(IlpValueError):
    code = "InvalidAffinity"


class DensityTooLow(IlpValueError):
    code = "DensityTooLow"


class ZeroBaseline(IlpValueError):
    code = "ZeroBaseline"


class TooLarge(IlpValueError):
    code = "TooLarge"


class AllInfeasible(IlpError):
    code = "AllInfeasible"


# ---- I/O -----------------------------------------------------------------

class IoFailure(IlpError, OSError):
    code = "IoFailure"


class ParseError(IlpError):
    """Malformed input; ``line`` and ``column`` are 1-based when known."""

    code = "ParseError"

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            where = f"line {line}" if column is None else f"line {line}, column {column}"
            message = f"{where}: {message}"
        super().__init__(message)


class UnsupportedSection(ParseError):
    code = "UnsupportedSection"


class NonBinaryVariable(ParseError):
    code = "NonBinaryVariable"


class MissingObjectiveRow(ParseError):
    code = "MissingObjectiveRow"


class SchemaVersionMismatch(ParseError):
    code = "SchemaVersionMismatch"


class ValidationError(ParseError):
    code = "ValidationError"
