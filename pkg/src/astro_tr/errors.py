"""Exception hierarchy."""


class AstroError(Exception):
    """Base class for all package errors."""


class ConfigError(AstroError, ValueError):
    """Invalid or unknown configuration key, value or problem name."""


class InputError(AstroError, ValueError):
    """Malformed call arguments (e.g. dimension mismatch)."""


class ModelError(AstroError):
    """Local model could not be built."""


class PoisednessError(ModelError):
    """Interpolation set is not poised (singular interpolation matrix)."""


class BudgetExhausted(AstroError):
    """The oracle-call budget would be exceeded by the next batch."""


class EstimationError(AstroError, ValueError):
    """Not enough data to fit a quantity."""


class UsageError(AstroError, ValueError):
    """Operation called on data lacking a required field."""
