"""Exception and warning classes raised across the package."""


class MdriError(Exception):
    """Base class for all package errors."""


class UsageError(MdriError, ValueError):
    """Malformed call: empty grids, mismatched shapes, cost guards."""


class DomainError(MdriError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class MatrixError(MdriError, ValueError):
    """A matrix is not symmetric, not PSD/PD, or cannot be factored."""


class OracleError(MdriError):
    """A moment or MGF oracle failed at a specific exponent."""

    def __init__(self, message, p=None):
        super().__init__(message)
        self.p = p


class KramerError(MdriError):
    """The empirical log-MGF is unstable on the whole requested grid."""


class NoFiniteNormError(MdriError):
    """The log-MGF is infinite at every nonzero lambda."""


class InvalidDirectionSetError(MdriError, ValueError):
    """A finite direction set is not separating or leaves the unit ball."""


class PolarityError(MdriError, ValueError):
    """The origin is not an interior point, so the polar is unbounded."""


class EntropyDivergenceError(MdriError):
    """The entropy integral diverges at the requested exponent."""


class EntropyConditionError(MdriError):
    """The chaining entropy series does not converge."""


class ChainingUnavailableError(MdriError):
    """No exponent in the grid yields a finite chaining bound."""


class GridExtentError(MdriError, ValueError):
    """A grid function was queried outside its grid."""

    def __init__(self, message, required_box=None):
        super().__init__(message)
        self.required_box = required_box


class DegenerateDirectionError(MdriError, ValueError):
    """The gradient of the conjugate is orthogonal to the query vector."""


class InvariantViolation(MdriError):
    """A proven inequality failed numerically; indicates a bug."""


class TruncationWarning(UserWarning):
    """A supremum was attained on the edge of a finite search region."""


class KramerWarning(UserWarning):
    """Part of a lambda grid was dropped because the MGF is not finite there."""
