"""Exception hierarchy shared by all modules."""


class LevyError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LevyError, ValueError):
    pass


class NoJumpPartError(DomainError):
    """Raised when a jump-measure quantity is requested from a pure-Gaussian model."""


class DivergenceError(LevyError):
    """An integral or exponential moment is infinite.

    ``tail`` names the offending region ("left", "right", "zero") when known.
    """

    def __init__(self, message: str, tail: str | None = None):
        super().__init__(message)
        self.tail = tail


class IntegrabilityError(DivergenceError):
    pass


class QuadratureError(LevyError):
    def __init__(self, message: str, estimate: float = float("nan"), error: float = float("nan")):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class NoSolutionError(LevyError):
    """The martingale equation has no root on the admissible interval."""

    def __init__(self, message: str, bracket: tuple[float, float] | None = None):
        super().__init__(message)
        self.bracket = bracket


class EquivalenceError(LevyError):
    """Two models are not mutually absolutely continuous."""


class EnvelopeError(LevyError):
    pass


class UnsupportedSimulation(LevyError):
    pass


class ConfigError(LevyError, ValueError):
    pass
