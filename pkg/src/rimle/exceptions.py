"""Exception hierarchy for rimle."""


class RimleError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateLikelihoodError(RimleError, ArithmeticError):
    """The pseudo-density is zero at some observation."""


class DegenerateScatterError(RimleError, ArithmeticError):
    """All weighted scatter eigenvalues vanish, so no covariance can be fitted."""


class DegenerateFitError(RimleError, ArithmeticError):
    """Every observation is assigned to the noise component."""


class EmptyComponentError(RimleError):
    """A Gaussian component lost all of its mass and could not be re-seeded."""


class PreconditionError(RimleError, ValueError):
    """The data do not satisfy the existence assumption on distinct points."""


class AllStartsFailedError(RimleError):
    """Every start of a multistart fit raised.

    Attributes
    ----------
    failures : list of (int, Exception)
        Start index and the exception it raised.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        detail = "; ".join(f"start {i}: {type(e).__name__}: {e}" for i, e in self.failures)
        super().__init__(f"all {len(self.failures)} starts failed ({detail})")


class ParseError(RimleError, ValueError):
    """A data file could not be parsed; ``row`` and ``column`` are 1-based."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ZeroMADError(RimleError, ValueError):
    """A column has zero median absolute deviation and cannot be standardized."""

    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} has zero median absolute deviation")
