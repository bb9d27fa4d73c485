"""Exception hierarchy shared by every module."""


class LeopardError(Exception):
    """Base class for all errors raised by this package."""


class BoundsError(LeopardError, IndexError):
    pass


class InvalidOrderingError(LeopardError, ValueError):
    pass


class DegenerateFeedbackError(LeopardError, ValueError):
    pass


class NoFeedbackError(LeopardError, ValueError):
    pass


class UnknownItemError(LeopardError, KeyError):
    pass


class ShapeError(LeopardError, ValueError):
    pass


class NumericError(LeopardError, ArithmeticError):
    pass


class NormalizationError(LeopardError, ValueError):
    pass


class DegenerateInputError(LeopardError, ValueError):
    pass


class EpisodeOverError(LeopardError, RuntimeError):
    pass


class UnsupportedEnvironmentError(LeopardError, ValueError):
    pass


class BudgetError(LeopardError, ValueError):
    pass


class NoDataError(LeopardError, ValueError):
    pass
