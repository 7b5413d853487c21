"""Exception hierarchy shared by every pipeline stage."""


class TapaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TapaError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(TapaError, RuntimeError):
    """A caller violated a documented precondition."""


class DomainError(TapaError, ValueError):
    """A value lies outside the domain an operation accepts."""


class DataError(TapaError, ValueError):
    """Input data is missing, empty or malformed."""


class ParseError(DataError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(TapaError, ValueError):
    """An experiment configuration is invalid."""
