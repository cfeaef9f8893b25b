class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class NumericError(ArithmeticError):
    """A forward pass produced NaN/Inf; the message names the operation."""
