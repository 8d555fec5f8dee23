"""Exception hierarchy shared by all modules."""


class OpticrouteError(Exception):
    """Base class for every error raised by the package."""


class DomainError(OpticrouteError, ValueError):
    """An input lies outside the admissible domain."""


class ParameterError(OpticrouteError, ValueError):
    """An argument is outside its allowed range."""


class StateError(OpticrouteError, RuntimeError):
    """An object is used before it has been fully constructed."""


class ConvergenceError(OpticrouteError, RuntimeError):
    """An iterative procedure failed to converge."""


class UnreachableError(OpticrouteError, RuntimeError):
    """No path exists between two nodes under the given edge set."""


class ConfigError(OpticrouteError, ValueError):
    """An experiment configuration is invalid."""
