"""Exception hierarchy.

Numerical failures and data failures are kept apart because the CLI maps
them to different exit codes.
"""


class ManifoldRegressError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(ManifoldRegressError, ValueError):
    pass


class InvalidPoint(ManifoldRegressError, ValueError):
    """A value violates the invariants of its manifold."""


class NumericalError(ManifoldRegressError, ArithmeticError):
    """Base for failures of a numerical procedure."""


class ProjectionError(NumericalError):
    """The projection onto the embedded image is undefined or not unique."""


class EmptyNeighborhood(NumericalError):
    """Kernel weights sum to (numerically) zero at a query."""


class RankDeficientDesign(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class AntipodalPoints(NumericalError):
    """The sphere log map is undefined between antipodal points."""


class AntipodalIterate(AntipodalPoints):
    """Gradient descent iterate is antipodal to a response."""


class DataError(ManifoldRegressError, ValueError):
    """Malformed input data.

    ``line`` is the 1-based line number within ``path`` when known.
    """

    def __init__(self, message, *, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.message = message
