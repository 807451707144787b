"""Exception hierarchy for lagflm."""


class LagFLMError(Exception):
    """Base class for all errors raised by this package."""


class InvalidIntervalError(LagFLMError, ValueError):
    pass


class OutOfDomainError(LagFLMError, ValueError):
    pass


class OutOfValidRangeError(OutOfDomainError):
    """Evaluation time lies outside the valid response interval."""


class NumericError(LagFLMError, ArithmeticError):
    """Non-finite values or a failed factorization."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class SingularDesignError(NumericError):
    pass


class RankDeficientError(NumericError):
    pass


class IllConditionedError(NumericError):
    pass


class EmptyPairingError(LagFLMError, ValueError):
    pass


class ShapeError(LagFLMError, ValueError):
    pass


class NoSignalError(LagFLMError, ValueError):
    pass


class ConfigError(LagFLMError, ValueError):
    pass


class UndefinedNPEError(LagFLMError, ValueError):
    pass


class FoldDegeneracyError(LagFLMError, ValueError):
    pass


class ParseError(LagFLMError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DenseGridError(ParseError):
    pass
