"""Exception hierarchy shared across the package."""


class LogomineError(Exception):
    """Base class for all package errors."""


class ManifestError(LogomineError):
    """Malformed manifest content; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(LogomineError):
    """Invalid run configuration."""


class SlotNotInitializedError(LogomineError):
    """A detector slot was used before bootstrap/fine-tune."""


class MissingClassError(LogomineError):
    """Bootstrap data does not cover every class."""

    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__("no bootstrap images for classes: " + ", ".join(self.missing))


class TransportError(LogomineError):
    """External detector transport failure; retryable, carries attempt count."""

    def __init__(self, message: str, attempts: int = 1):
        self.attempts = attempts
        super().__init__(f"{message} (after {attempts} attempt(s))")


class CompositeError(LogomineError):
    """Icon does not fit the background at the requested transform/position."""
