"""Exception types shared across the package."""


class ExtractorError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ExtractorError):
    """Invalid argument, malformed value, or broken precondition."""


class CheckpointError(ValidationError):
    """Checkpoint file is unreadable or missing required structure."""
