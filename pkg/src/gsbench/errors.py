"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or infeasible configuration value."""


class ParseError(ValueError):
    """Malformed input text. Carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class RangeError(ValueError):
    """A vertex id falls outside the representable or declared range."""


class ModelError(ValueError):
    """The statistical model is undefined for the given inputs."""


class CapacityError(RuntimeError):
    """A request exceeds a pre-allocated buffer's capacity."""


class ReplayInvalidated(RuntimeError):
    """A captured execution graph no longer matches the live buffers."""
