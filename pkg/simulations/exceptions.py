"""Error hierarchy shared by the simulation library and the management commands."""


class PushSimError(Exception):
    """Base class for every error raised by the simulator."""


class InvalidArgument(PushSimError, ValueError):
    """An argument or configuration value is outside its documented domain."""


class ConstructionFailure(PushSimError, RuntimeError):
    """A randomized construction did not succeed within its retry budget."""


class NumericFailure(PushSimError, ArithmeticError):
    """A numeric guarantee was violated (non-convergence, non-positive weights, ...)."""
