"""Exception types shared across the simulator.

All derive from ValueError so callers that only care about "bad input"
can catch one base class, while tests can pin the precise failure kind.
"""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InvalidSavingRateError(DomainError):
    """A saving rate ratio is outside (0, 1]."""


class BudgetExhaustedError(ValueError):
    """No privacy budget remains for the requested operation."""


class BudgetTooSmallForOrderError(ValueError):
    """A DP budget converts to a negative RDP budget at the chosen order."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""
