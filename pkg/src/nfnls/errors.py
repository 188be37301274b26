"""Exception types shared across the package.

Every guard in the library raises one of these, so callers can tell a bad
configuration apart from a violated operator precondition or a numerical
breakdown at runtime.
"""


class ConfigurationError(ValueError):
    """A grid / solver / experiment parameter is outside its documented range."""


class GridMismatchError(ValueError):
    """Two values built on different grids were combined."""


class BoxRangeError(ValueError):
    """A box index or enumeration window falls outside the grid."""


class DomainError(ValueError):
    """An argument violates a mathematical precondition (q < 1, m <= 0, ...)."""


class PreconditionError(ValueError):
    """Operator input violates a structural precondition (resonant tuple, singular denominator)."""


class ResourceGuardError(RuntimeError):
    """A requested computation exceeds the configured desk-scale guards."""


class UndefinedRatioError(ZeroDivisionError):
    """A ratio of norms was requested for zero input."""


class DivergenceError(RuntimeError):
    """The fixed-point iteration stopped contracting.

    Carries the measured contraction history in ``ratios``.
    """

    def __init__(self, message, ratios=None):
        super().__init__(message)
        self.ratios = list(ratios) if ratios is not None else []


class NumericalFailureError(RuntimeError):
    """A reference computation left its validity envelope (conservation drift etc.)."""
