"""Exception hierarchy shared by all jpolock modules."""


class JPOError(Exception):
    """Base class for every error raised by jpolock."""


class InvalidArgumentError(JPOError, ValueError):
    pass


class DomainError(JPOError, ValueError):
    """Input is well formed but outside the model's region of validity."""


class MonostableError(DomainError):
    """The potential has fewer than two minima (ILS beyond bistability)."""


class ConvergenceError(JPOError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InstabilityError(JPOError, RuntimeError):
    """Trajectory left the validity region of the potential."""


class AliasingError(InvalidArgumentError):
    pass


class AmbiguityError(JPOError, ValueError):
    """Phase/amplitude split is undefined without a reference direction."""


class FitError(JPOError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PreconditionError(JPOError, ValueError):
    pass


class TraceFormatError(JPOError, ValueError):
    pass


class ConfigError(JPOError, ValueError):
    pass
