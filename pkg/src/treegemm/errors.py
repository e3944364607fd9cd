"""Exception types shared across the package.

The CLI maps these onto process exit codes: usage errors exit 2 (click),
InvalidInputError exits 3, ContractViolationError exits 4.
"""


class TreeGemmError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TreeGemmError):
    """Caller-supplied data violates a documented precondition."""


class ConfigurationError(TreeGemmError):
    """Inconsistent or incomplete configuration (noise law, cost table, ...)."""


class ContractViolationError(TreeGemmError):
    """An internal invariant that static analysis should make unreachable broke."""
