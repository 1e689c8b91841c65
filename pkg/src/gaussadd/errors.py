"""Exception and warning types shared across the package."""


class GaussaddError(Exception):
    """Base class for package errors."""


class CutoffError(GaussaddError, ValueError):
    """Fock cutoff is invalid or too small for the requested accuracy."""


class ParameterError(GaussaddError, ValueError):
    """A physical parameter is outside its admissible range."""


class NotHermitianError(GaussaddError, ValueError):
    """Operator expected to be Hermitian (or positive) is not."""


class ConsistencyError(GaussaddError, ArithmeticError):
    """Independent evaluation routes of the same quantity disagree."""


class ResourceError(GaussaddError, MemoryError):
    """Requested construction exceeds the configured size ceiling."""


class ConfigError(GaussaddError, ValueError):
    """Run configuration failed validation."""


class LeakageWarning(UserWarning):
    """Truncation leakage exceeded the soft tolerance but not the hard ceiling."""
