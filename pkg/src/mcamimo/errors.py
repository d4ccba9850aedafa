"""Exception types shared across the simulator."""


class DimensionError(ValueError):
    """Array shapes are inconsistent or dimensions are invalid."""


class ParameterError(ValueError):
    """A scalar parameter is outside its admissible range."""


class SingularityError(ArithmeticError):
    """A linear system is singular or too ill-conditioned to solve."""


class DegenerateInputError(ValueError):
    """Input carries no information for the requested operation (e.g. all zeros)."""


class RealizabilityError(ValueError):
    """A required device conductance cannot be programmed within the device range."""

    def __init__(self, message, device=None):
        super().__init__(message)
        self.device = device


class ConvergenceError(RuntimeError):
    """Transient simulation did not settle before the end of the time window."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
