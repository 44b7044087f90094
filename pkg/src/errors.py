"""
Exceptions raised by the pricing engine.

Every error derives from PricingError so the command line can turn any
engine failure into a non-zero exit status with a single except clause.
"""


class PricingError(Exception):
    pass


# Raised for invalid grids, path counts, mismatched run configurations.
class ConfigurationError(PricingError, ValueError):
    pass


# Raised when a closed form is evaluated outside its domain, e.g. t > T.
class DomainError(PricingError, ValueError):
    pass


class DistributionError(PricingError, ValueError):
    """
    Raised when a joint default distribution violates its invariants.

    :param message: description of the violation
    :param cell: (row, column) of the offending matrix cell, or None
    """

    def __init__(self, message: str, cell: tuple = None):
        super().__init__(message)
        self.cell = cell


# Raised when an operation is called on an input it is not defined for.
class PreconditionError(PricingError, ValueError):
    pass


# Raised when a rank correlation is requested for a degenerate marginal.
class UndefinedCorrelationError(PricingError, ValueError):
    pass


# Raised by the least-squares fit on a rank-deficient design matrix.
class RegressionError(PricingError, ArithmeticError):
    pass


class ConvergenceError(PricingError, ArithmeticError):
    """
    Raised when too many paths fail to converge in the Newton solve.

    :param message: description of the failure
    :param paths: indices of the offending paths
    """

    def __init__(self, message: str, paths=()):
        super().__init__(message)
        self.paths = list(paths)


# Raised when the PDE policy iteration does not settle.
class SolverError(PricingError, ArithmeticError):
    pass


# Raised when an adaptive quadrature does not reach its tolerance.
class QuadratureError(PricingError, ArithmeticError):
    pass


class ConfigParseError(ConfigurationError):
    """
    Raised by the config loader with the line the problem was found on.

    :param message: description of the problem
    :param line: 1-based line number, or None when the problem is not tied to a line
    """

    def __init__(self, message: str, line: int = None):
        if line is not None:
            message = "line {}: {}".format(line, message)
        super().__init__(message)
        self.line = line
