"""Exception types raised across the toolkit."""


class MinmaxError(Exception):
    """Base class for every error raised by this package."""


class NoSignChange(MinmaxError, ValueError):
    """Bisection bracket whose endpoints share a strict sign."""


class NonFiniteError(MinmaxError, ArithmeticError):
    """A NaN or Inf reached solver state.

    Solvers attach whatever trace they had accumulated before the failure
    as ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NotPositiveDefinite(MinmaxError, ArithmeticError):
    pass


class DimensionMismatch(MinmaxError, ValueError):
    pass


class EmptySet(MinmaxError, ValueError):
    pass


class BadMagic(MinmaxError, ValueError):
    pass


class TruncatedFile(MinmaxError, ValueError):
    pass


class CountMismatch(MinmaxError, ValueError):
    pass


class ConfigError(MinmaxError, ValueError):
    """Invalid experiment configuration, detected before any compute."""
