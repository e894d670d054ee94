"""Exception types shared across the package."""


class ConfigError(Exception):
    """Raised when a config file or CLI argument set is invalid."""


class NumericError(Exception):
    """Raised when a computation diverges or loses numeric validity."""
