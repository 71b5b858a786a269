"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A solver, schedule or plan cannot be built from the given settings.

    ``key`` names the offending setting when one can be singled out.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class UnsupportedOperation(TypeError):
    """The object does not provide the requested operation."""


class InvalidStateError(RuntimeError):
    """Run-time data contradicts an input contract (e.g. f(x) < f*)."""


class OracleError(ArithmeticError):
    """The objective returned a non-finite value."""


class StationaryPointError(ArithmeticError):
    """A gradient-based direction was requested at a zero gradient."""
