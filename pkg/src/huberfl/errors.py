"""Exception types shared across the package."""


class HuberFLError(Exception):
    """Base class for all package errors."""


class ContractError(HuberFLError, ValueError):
    """An input violates a documented precondition (shapes, emptiness)."""


class ParameterError(HuberFLError, ValueError):
    """A tuning parameter is outside its valid range."""


class DivergenceError(HuberFLError, FloatingPointError):
    """Training produced a non-finite parameter vector."""
