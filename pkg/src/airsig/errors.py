"""Exception hierarchy shared by every pipeline stage."""


class AirsigError(Exception):
    """Base class; the CLI maps each subclass to its own exit code."""

    exit_code = 10


class DomainError(AirsigError, ValueError):
    exit_code = 11


class OcclusionError(AirsigError, ValueError):
    exit_code = 12


class DegenerateDepthError(AirsigError, ValueError):
    exit_code = 13


class ParseError(AirsigError, ValueError):
    exit_code = 14

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class InsufficientDataError(AirsigError, ValueError):
    exit_code = 15


class ShapeError(AirsigError, ValueError):
    exit_code = 16


class EmptyTraceError(AirsigError, ValueError):
    exit_code = 17


class ConfigError(AirsigError):
    exit_code = 18
