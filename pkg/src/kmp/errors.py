"""Exception hierarchy shared by all modules.

Two families matter to callers: bad inputs (``ValidationError``, CLI exit
code 2) and numerical breakdowns (``NumericalError``, CLI exit code 3).
"""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition or invariant."""


class NumericalError(RuntimeError):
    """Raised when a numerical procedure breaks down on valid-looking input."""


class ConditioningError(NumericalError):
    """Conditioning on an input block whose covariance is numerically singular."""


class FactorizationError(NumericalError):
    """Symmetric factorization of a kernel system failed even after jitter."""


class ComponentCollapseError(NumericalError):
    """A mixture component lost essentially all responsibility mass during EM."""


class ExtrapolationWarning(UserWarning):
    """Query lies far outside the support of the fitted model."""
