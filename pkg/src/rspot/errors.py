"""Exception hierarchy.

Input and validation problems derive from :class:`InputError` (CLI exit
code 1); numerical breakdowns derive from :class:`NumericalError` (exit
code 2).
"""


class RspError(Exception):
    """Base class for all package errors."""


class InputError(RspError, ValueError):
    """Malformed graph, margins, or configuration."""


class GraphError(InputError):
    pass


class MarginError(InputError):
    pass


class InfeasibleError(InputError):
    """No consistent killing probabilities exist for the requested margins."""


class NumericalError(RspError, ArithmeticError):
    """Singular systems, underflow, or dual ascent breakdown."""


class ConvergenceError(NumericalError):
    """The dual ascent did not converge within ``max_iter`` sweeps.

    The last multipliers and constraint residuals are attached so the
    caller can inspect how far off the iterate was.
    """

    def __init__(self, message, lambda_in=None, lambda_out=None, residuals=None):
        super().__init__(message)
        self.lambda_in = lambda_in
        self.lambda_out = lambda_out
        self.residuals = residuals
