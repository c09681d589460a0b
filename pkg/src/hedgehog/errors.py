"""Exception types shared across the solver."""


class HedgehogError(Exception):
    """Base class for all package errors."""


class CoincidentPointsError(HedgehogError, ValueError):
    """Kernel evaluated at source == target."""


class DegenerateGeometryError(HedgehogError, ValueError):
    """Surface parametrization has a (numerically) zero Jacobian."""


class FittingError(HedgehogError, RuntimeError):
    """Least-squares patch fit could not be computed."""


class RefinementError(HedgehogError, RuntimeError):
    """A refinement loop terminated without meeting its criterion."""

    def __init__(self, message, offenders=None):
        super().__init__(message)
        self.offenders = list(offenders) if offenders is not None else []


class UsageError(HedgehogError, ValueError):
    """API called with arguments outside its contract."""
