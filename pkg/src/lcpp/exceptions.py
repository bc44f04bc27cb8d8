"""Exception hierarchy shared by the library and the CLI."""


class LcppError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(LcppError, ValueError):
    """Invalid parameters, mismatched dimensions or inconsistent settings."""


class InfeasibleError(LcppError):
    """The constraint set of a projection or subproblem is empty."""


class StartupError(LcppError):
    """The starting point is not strictly feasible for the initial level."""


class DegenerateLevelError(LcppError):
    """The requested level sits on an MFCQ boundary (integer multiple of the saturation value)."""


class DataFormatError(LcppError):
    """Malformed dataset, solution or trace file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
