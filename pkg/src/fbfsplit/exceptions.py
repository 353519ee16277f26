"""Exception hierarchy shared by all modules."""


class FBFError(Exception):
    """Base class for errors raised by :mod:`fbfsplit`."""


class DimensionError(FBFError, ValueError):
    """Operands live in spaces of different dimension."""


class MetricError(FBFError, ValueError):
    """A matrix fails to be a valid metric (symmetric, bounded below).

    ``condition`` carries the condition-number estimate when the failure
    comes from near-singularity.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class StepSizeError(FBFError, ValueError):
    """Step-size parameters violate ``0 < eps < 1/(beta*mu + 1)``."""


class UnsupportedCombinationError(FBFError, NotImplementedError):
    """The metric resolvent cannot be evaluated for this operator/metric pair."""


class NonFiniteError(FBFError, FloatingPointError):
    """An intermediate of the iteration became NaN or infinite."""

    def __init__(self, message, substep=None):
        super().__init__(message)
        self.substep = substep


class DivergenceError(FBFError, RuntimeError):
    """Iterates left the divergence guard ball.

    The partial trace up to the offending iteration is kept on ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(FBFError, ValueError):
    """Run configuration failed validation.

    ``errors`` lists every problem found as ``(path, message)`` pairs.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{path}: {msg}" if path else msg for path, msg in self.errors]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))
