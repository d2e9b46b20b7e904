"""Exception hierarchy shared across the package."""


class InvalidParameterError(ValueError):
    """A model, window or algorithm parameter is out of its admissible range."""


class DomainError(ValueError):
    """A point lies outside the observation window."""


class ContractError(ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class EstimationError(RuntimeError):
    """A fitting procedure could not produce an estimate."""


class RankDeficientError(EstimationError):
    """The regression design matrix does not have full column rank.

    Attributes
    ----------
    column : int
        Index of the first column that is linearly dependent on the
        preceding ones.
    """

    def __init__(self, message, column):
        super().__init__(message)
        self.column = column
