"""Exception and warning types shared across the package."""


class CountSynthError(Exception):
    """Base class for all countsynth errors."""


class IngestError(CountSynthError, ValueError):
    """Problem found while reading a study table.

    ``row`` is the 1-based line number in the source file (header = line 1),
    ``column`` the offending column name, when known.
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where = f"row {row}"
            if column is not None:
                where += f", column {column!r}"
            where += ": "
        elif column is not None:
            where = f"column {column!r}: "
        super().__init__(where + message)


class MissingColumn(IngestError):
    pass


class BadNumeric(IngestError):
    pass


class InvariantViolation(IngestError):
    pass


class ConflictingEvidence(IngestError):
    pass


class DomainError(CountSynthError, ValueError):
    """Argument outside the mathematical domain of a kernel."""


class DimensionMismatch(CountSynthError, ValueError):
    """Arrays that must align 1:1 do not."""


class InitFailure(CountSynthError, RuntimeError):
    """No finite-posterior starting point found within the retry budget."""


class NumericalError(CountSynthError, RuntimeError):
    """The log-posterior returned NaN during sampling.

    ``state`` carries a diagnostic snapshot (chain, iteration, coordinate,
    current parameter vector).
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class InsufficientDraws(CountSynthError, ValueError):
    """Too few chains or draws for the requested diagnostic."""


class ConvergenceFailure(CountSynthError, RuntimeError):
    """A hyperparameter failed the R-hat gate and --force was not given."""

    def __init__(self, message, flagged=()):
        super().__init__(message)
        self.flagged = tuple(flagged)


class NoStudiesLeft(CountSynthError, ValueError):
    """Subsetting or covariable exclusions emptied the dataset."""


class CovariableMismatch(CountSynthError, ValueError):
    """Requested output is undefined for the fitted covariable set."""


class TooFewStudies(CountSynthError, ValueError):
    """Correlation screening needs at least four reporting studies."""


class GridTooCoarse(CountSynthError, RuntimeError):
    """Quadrature grid leaves more than the allowed mass on its boundary."""


class EmptySubsetWarning(UserWarning):
    """A subset filter matched no records."""
