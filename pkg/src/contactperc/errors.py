class ConfigurationError(ValueError):
    """Invalid parameters or configuration, detected before any work is done."""


class ValidationFailure(RuntimeError):
    """A simulation engine disagreed with an exact oracle."""
