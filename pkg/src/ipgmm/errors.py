"""Exception types raised by the fitting routines."""


class IpgmmError(Exception):
    """Base class for all package errors."""


class InvalidMatrixError(IpgmmError, ValueError):
    """Input is not a valid symmetric positive semidefinite matrix."""


class SingularMatrixError(IpgmmError, ValueError):
    """A matrix that must be positive definite is (numerically) singular."""


class InvalidShapeError(IpgmmError, ValueError):
    """Shape vector does not have unit product."""


class AllZeroValuesError(IpgmmError, ValueError):
    """Optimal truncation was asked to work on an all-zero input."""


class InvalidGError(IpgmmError, ValueError):
    """Number of covariance classes outside ``1 <= G <= k``."""


class SingularScatterError(SingularMatrixError):
    """A class scatter is singular and no shape constraint is active."""


class DegenerateComponentError(IpgmmError, ArithmeticError):
    """A mixture component lost (almost) all of its mass during EM."""


class TooFewObservationsError(IpgmmError, ValueError):
    """Not enough observations for the requested number of components."""


class EmptyGroupError(IpgmmError, ValueError):
    """A labeled group has no observations."""


class SingularGroupError(SingularMatrixError):
    """A labeled group has a singular scatter and constraints are disabled."""


class InputError(IpgmmError, ValueError):
    """Malformed input file or inconsistent command-line arguments."""
