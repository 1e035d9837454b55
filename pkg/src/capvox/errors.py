"""Exception types shared across the package."""


class CapvoxError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(CapvoxError):
    """Invalid argument, malformed value, or broken precondition."""


class AlignmentError(ValidationError):
    """Feature and response tables share no common image ids."""


class FormatError(ValidationError):
    """Malformed file content. ``code`` names the specific failure mode."""

    def __init__(self, message: str, code: str = "malformed"):
        super().__init__(message)
        self.code = code
