"""Exception and warning types raised by thermobin."""


class ThermobinError(Exception):
    """Base class for all library errors."""


class ConfigError(ThermobinError, ValueError):
    """Invalid input or parameter combination."""


class NumericalError(ThermobinError, ArithmeticError):
    """A numerical routine could not produce a trustworthy value."""


class DivergentPartitionFunction(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class IncompletePOVM(ConfigError):
    pass


class ParameterOutOfRange(ConfigError):
    pass


class TooManyBins(ConfigError):
    pass


class InstanceTooLarge(ConfigError):
    pass


class TruncationInsufficient(NumericalError):
    pass


class UnsupportedSize(ConfigError):
    pass


class InsufficientSizes(ConfigError):
    pass


class NonIdentifiable(NumericalError):
    pass


class BoundViolation(NumericalError):
    """A probe-derived Fisher information exceeded the optimal binned value."""


class NoConvergence(NumericalError):
    """Raised when an iterative solver runs out of iterations.

    The best partial result is attached as ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class EmptyBin(UserWarning):
    pass


class DegenerateOutcome(UserWarning):
    pass
