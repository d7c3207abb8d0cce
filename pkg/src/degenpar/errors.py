"""Exception types raised by the library."""


class MeshMismatchError(ValueError):
    """Two fields that must share a mesh do not."""


class NumericDomainError(ArithmeticError):
    """A computation left the real domain (NaN, negative base, bad exponent)."""


class PreconditionError(ValueError):
    """An operation was called with arguments violating its preconditions."""


class ExtrapolationError(ValueError):
    """A tabulated nonlinearity was evaluated outside its table."""


class ConvergenceError(RuntimeError):
    """An iterative method failed to converge within its iteration cap."""


class StepError(ConvergenceError):
    """A time step failed; carries the last nonlinear residual norm."""

    def __init__(self, message, residual=float("nan"), time=float("nan")):
        super().__init__(message)
        self.residual = residual
        self.time = time
