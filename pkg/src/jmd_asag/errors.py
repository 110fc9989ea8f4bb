"""Exception hierarchy shared across the package.

The CLI maps each family to a distinct exit status, see ``EXIT_CODES``.
"""

from __future__ import annotations


class JmdError(Exception):
    """Base class for every error raised on purpose by this package."""


class ConfigError(JmdError):
    """Invalid configuration value or incompatible settings."""


class DataError(JmdError):
    """Problem with an input file or a sample."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class SchemaError(DataError):
    """Missing or unexpected columns in a tabular file."""


class LabelError(DataError):
    """Label outside the active label scheme."""


class DomainError(DataError):
    """Unknown domain name or domain index."""


class ContractError(JmdError):
    """A caller violated an operation's precondition."""


class DimensionError(ContractError, ValueError):
    """Tensor shapes are incompatible."""


class EmptySequenceError(ContractError, ValueError):
    """A sequence operation received zero valid positions."""


class NumericError(JmdError, ArithmeticError):
    """Non-finite values or a failed gradient check."""


EXIT_CODES = {
    ConfigError: 2,
    DataError: 3,
    NumericError: 4,
    ContractError: 5,
}


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return 1
