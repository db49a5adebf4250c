"""Exception types raised across the package."""


class AvgScaError(Exception):
    """Base class for all package errors."""


class ConfigError(AvgScaError, ValueError):
    pass


class DomainError(AvgScaError, ValueError):
    pass


class ResolutionError(DomainError):
    """More samples requested than the continuous-time grid provides."""


class WindowError(DomainError):
    """Requested averaging window does not fit the trace segments."""


class AttackInconclusive(AvgScaError):
    """Every trace column in the attack window has zero variance."""


class LibraryError(AvgScaError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class VCDParseError(AvgScaError, ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TraceFormatError(AvgScaError, ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset
