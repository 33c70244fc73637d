"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so keep the hierarchy flat.
"""


class ValidationError(ValueError):
    """Malformed input: bad interval, non-partition, non-nested family, ..."""


class DomainError(ValueError):
    """Input outside the domain of an operation (empty set, n = 0, zero norm)."""


class PrecisionError(ArithmeticError):
    """A sign could not be decided within the configured precision budget."""


class BudgetError(RuntimeError):
    """An enumeration or search would exceed its configured budget."""


class PreconditionError(ValueError):
    """A mathematical precondition failed; ``witness`` carries the evidence."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class LemmaFailure(RuntimeError):
    """An approximation step could not meet its error target."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []
