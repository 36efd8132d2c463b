"""Exception hierarchy shared by all submodules."""


class MLCoupleError(Exception):
    """Base class for package errors."""


class NonFinite(MLCoupleError):
    """Integration left the guard range or produced NaN/inf."""


class TooShort(MLCoupleError):
    """Analysis window does not contain enough of the signal."""


class SingularFit(MLCoupleError):
    """Weighted normal equations are rank deficient."""


class InsufficientData(MLCoupleError):
    """Too few points carry nonzero weight for the requested fit."""


class AllFailed(MLCoupleError):
    """Every candidate bandwidth produced a singular fit."""


class LengthMismatch(MLCoupleError, ValueError):
    pass


class DegenerateTimes(MLCoupleError, ValueError):
    pass


class NonPositiveSd(MLCoupleError, ValueError):
    pass


class SimulationFailed(MLCoupleError):
    """Model simulation failed while evaluating a likelihood."""


class DegeneratePolygon(MLCoupleError, ValueError):
    pass


class InitialOutsideRegion(MLCoupleError, ValueError):
    pass


class EmptyWindow(MLCoupleError, ValueError):
    pass


class MalformedFile(MLCoupleError, ValueError):
    """An input CSV or JSON file could not be parsed."""
