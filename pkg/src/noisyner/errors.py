"""Toolkit exception types, mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Bad configuration or unusable arguments (CLI exit 2)."""


class DataError(ValueError):
    """Malformed or inconsistent input data (CLI exit 3)."""
