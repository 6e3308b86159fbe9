"""Exception types shared across the package.

The CLI maps ``ValidationError`` (and subclasses) to exit code 2 and every
other ``SpikemapError`` to exit code 1.
"""


class SpikemapError(Exception):
    """Base class for all package errors."""


class ParseError(SpikemapError):
    """A file could not be parsed; message carries the offending line."""


class ValidationError(SpikemapError):
    """Inputs violated a documented precondition or invariant."""


class InfeasibleError(ValidationError):
    """No valid partitioning / compilation exists for the given limits."""


class GenerationError(SpikemapError):
    """A synthetic graph could not be realized from the requested spec."""


class ConfigError(ValidationError):
    """A config file or run configuration is inconsistent."""
