"""
Exception hierarchy shared by every stage of the pipeline.

Each family maps to a distinct exit code of the command-line entry point.
"""

from typing import Optional


class BehavePassError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigurationError(BehavePassError):
    """Invalid configuration, preset conflict or out-of-range parameter."""

    exit_code = 4


class DatasetSchemaError(BehavePassError):
    """Dataset file does not follow the canonical layout."""

    exit_code = 5

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")
        self.field = field
        self.line = line


class EmptyInputError(BehavePassError):
    exit_code = 5


class FeatureError(BehavePassError):
    exit_code = 5


class DimensionMismatchError(BehavePassError):
    exit_code = 5


class InsufficientDataError(BehavePassError):
    exit_code = 5


class ProtocolError(BehavePassError):
    exit_code = 5


class TrainingDivergedError(BehavePassError):
    exit_code = 6


class CheckpointError(BehavePassError):
    exit_code = 3


class MissingArtifactError(BehavePassError):
    """A stage was started without the artifact it consumes."""

    exit_code = 3

    def __init__(self, artifact: str, hint: str = ""):
        message = f"missing artifact: {artifact}"
        if hint:
            message = f"{message} ({hint})"
        super().__init__(message)
        self.artifact = artifact


class ForwardCacheError(BehavePassError):
    """Backward pass requested without a matching forward cache."""
