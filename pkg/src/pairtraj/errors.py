"""Exception types shared across the package."""


class PairtrajError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(PairtrajError, ValueError):
    """Arguments violate a documented precondition (bad k, mismatched grids, ...)."""


class DataError(PairtrajError, ValueError):
    """Input files or records are malformed or unreadable."""


class ConfigError(PairtrajError, ValueError):
    """Configuration file or CLI flags are invalid."""


class DegenerateFitError(PairtrajError, ArithmeticError):
    """A numerical subproblem is rank-deficient or otherwise has no usable solution."""


class NumericalError(PairtrajError, ArithmeticError):
    """A solver failed to converge or reported an unusable status."""
