"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A config object or config reference is invalid for the operation."""


class SingularityError(ValueError):
    """Field evaluation requested inside a dipole's exclusion radius."""


class DomainError(ValueError):
    """Input outside the physical domain of the operation."""


class RangeError(ValueError):
    """Requested value outside the attainable range."""


class UsageError(ValueError):
    """Operation called with arguments that violate its contract."""


class ParseError(ValueError):
    """Malformed file content."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IntegrityError(RuntimeError):
    """Stored artifact fails its checksum or structural self-checks."""


class TrainingError(RuntimeError):
    """Optimization diverged."""

    def __init__(self, message: str, epoch: int | None = None):
        self.epoch = epoch
        super().__init__(message)
