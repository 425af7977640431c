"""Exception types shared across the package.

The command line maps InvalidInputError and ConfigurationError to exit
code 1 and MissingArtifactError to exit code 2.
"""


class InvalidInputError(ValueError):
    """Raised when caller-supplied data violates a documented precondition."""


class ConfigurationError(RuntimeError):
    """Raised when a requested operation is impossible in the given setup."""


class MissingArtifactError(FileNotFoundError):
    """Raised when a required on-disk artifact (dataset, model) is absent."""
