"""Error taxonomy shared across the package.

Validation errors cover bad arguments, malformed configs, and inputs that
violate documented preconditions; they map to CLI exit code 2.  Runtime
errors cover failures of an otherwise valid run (e.g. diverged training);
they map to CLI exit code 3.
"""


class PseError(Exception):
    """Base class for all package errors."""


class ValidationError(PseError, ValueError):
    """Bad input data, arguments, or preconditions."""


class ConfigError(ValidationError):
    """Malformed or inconsistent configuration."""


class TrainingDiverged(PseError, RuntimeError):
    """Training aborted on a non-finite loss."""


class CheckpointError(PseError, RuntimeError):
    """Checkpoint missing, corrupt, or incompatible."""
