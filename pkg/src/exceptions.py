"""Exception hierarchy shared by the services and the command line."""
from typing import Optional


class AccretiaError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(AccretiaError, ValueError):
    """Vector dimension does not match the space."""

    def __init__(self, expected: int, got: int):
        super().__init__(f"dimension mismatch: space has dim {expected}, vector has dim {got}")
        self.expected = expected
        self.got = got


class InvalidModulusError(AccretiaError, ValueError):
    """A modulus (Theta, psi, phi, varpi, xi*, tau, ...) produced a non-positive value."""


class DomainError(AccretiaError, ValueError):
    """An operation was called outside its precondition."""


class EmptySetError(AccretiaError, ValueError):
    """Set-distance operations need nonempty finite sets."""


class InverseRangeError(AccretiaError):
    """The target value could not be bracketed within the expansion budget."""


class SolverError(AccretiaError):
    """The implicit step solver did not reach its tolerance."""

    def __init__(self, message: str, step: Optional[int] = None):
        prefix = f"step {step}: " if step is not None else ""
        super().__init__(prefix + message)
        self.step = step


class ExpressionError(AccretiaError, ValueError):
    """An expression violates the safe grammar."""

    def __init__(self, message: str, source: str = "", column: Optional[int] = None):
        where = f" (column {column})" if column is not None else ""
        super().__init__(f"{message}{where}: {source!r}" if source else message + where)
        self.source = source
        self.column = column


class ScenarioError(AccretiaError, ValueError):
    """A scenario configuration is inconsistent beyond what the schema can express."""


class ConfigLoadError(AccretiaError):
    """A config file could not be parsed or validated; the message carries file:line."""
