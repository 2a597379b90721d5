"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised for malformed, unknown, or out-of-range configuration input."""


class NumericsError(RuntimeError):
    """Raised when an integration or optimization step fails numerically."""
