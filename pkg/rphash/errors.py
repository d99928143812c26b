"""
Error types shared by the rphash modules
"""

import config


class RPHashError(Exception):
    """Base class for every error raised by the toolkit"""

    exit_code = config.EXIT_CODES["domain"]


class UsageError(RPHashError, ValueError):
    """Invalid flag or argument combination"""

    exit_code = config.EXIT_CODES["usage"]


class PreconditionError(RPHashError, ValueError):
    """An operation was called outside its stated preconditions"""

    exit_code = config.EXIT_CODES["usage"]


class DomainError(RPHashError, ValueError):
    """Argument outside the mathematical domain of a function"""


class NotUnit(RPHashError, ValueError):
    """A tuple vector deviates from unit length"""


class Degenerate(RPHashError, ValueError):
    """Gram matrix is singular or not positive definite"""


class CholeskyFail(Degenerate):
    """Cholesky factorisation of a Gram matrix failed"""


class ZeroVector(RPHashError, ValueError):
    """Hash input has zero length"""


class DegenerateTriangle(RPHashError, ValueError):
    """Side lengths violate the spherical triangle inequalities"""


class UnsupportedConfiguration(RPHashError, ValueError):
    """No estimator exists for the requested (a, b, k, mode)"""


class ToleranceNotMet(RPHashError, ArithmeticError):
    """Quadrature refinement stopped before reaching the target tolerance"""

    exit_code = config.EXIT_CODES["tolerance"]
