"""Exception hierarchy shared by all modules."""


class CongestedFlowError(Exception):
    """Base class for all package errors."""


class InputDomainError(CongestedFlowError, ValueError):
    """An argument is outside the documented input domain."""


class PreconditionError(CongestedFlowError, ValueError):
    """A documented operation precondition does not hold."""


class AdmissibilityError(PreconditionError):
    """Initial data violate the contact/velocity compatibility condition."""


class CapacityError(CongestedFlowError, ValueError):
    """Problem size exceeds a hard capacity limit (e.g. exhaustive oracles)."""


class InvariantViolationError(CongestedFlowError, RuntimeError):
    """An internal invariant proved by the theory failed numerically."""


class ConfigError(CongestedFlowError, ValueError):
    """Scenario configuration is malformed; message carries the field path."""
