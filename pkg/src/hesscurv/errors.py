"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand dimensions do not conform."""


class ContractError(ValueError):
    """An input violates an operation's precondition."""


class MemoryCapError(RuntimeError):
    """A dense P x P object was requested for a model above the parameter cap."""


class ConvergenceError(RuntimeError):
    """An iterative eigensolver failed to converge.

    ``residuals`` holds the best per-eigenpair residual estimates reached and
    ``iterations`` the number of operator applications spent.
    """

    def __init__(self, message, residuals=None, iterations=None):
        super().__init__(message)
        self.residuals = residuals
        self.iterations = iterations
