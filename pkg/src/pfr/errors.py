"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class SolveError(RuntimeError):
    """A linear system or eigendecomposition could not be solved reliably."""


class NoRootError(RuntimeError):
    """A root-finding problem has no solution for the given input."""


class ParseError(ValueError):
    """Malformed serialized input (model, filter, truth or curve files)."""


class UnsupportedVersionError(ParseError):
    """Serialized model written by an incompatible format version."""


class ConfigError(ValueError):
    """Invalid experiment configuration.

    ``fields`` lists the offending configuration keys.
    """

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = list(fields)
