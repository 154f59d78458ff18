"""Exception types shared across the package."""


class DerivRootsError(Exception):
    """Base class for all package errors."""


class ValidationError(DerivRootsError, ValueError):
    """Invalid input. ``field`` names the offending field when known."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.message = message
        self.field = field


class PoleError(DerivRootsError, ZeroDivisionError):
    """Evaluation point coincides with a root / atom."""


class AccuracyError(DerivRootsError, ArithmeticError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ScaleError(DerivRootsError):
    """Problem size exceeds a configured cap."""


class ConvergenceError(DerivRootsError, ArithmeticError):
    def __init__(self, message, indices=None, residual=None):
        super().__init__(message)
        self.indices = [] if indices is None else list(indices)
        self.residual = residual


class DerivativeVanishesError(DerivRootsError, ZeroDivisionError):
    pass


class MagnitudeError(DerivRootsError, OverflowError):
    """Result too large to represent; ``log_abs`` and ``phase`` are kept."""

    def __init__(self, message, log_abs=None, phase=None):
        super().__init__(message)
        self.log_abs = log_abs
        self.phase = phase


class DegenerateError(DerivRootsError, ValueError):
    """Degenerate configuration (singular map, coincident points)."""


class TrialError(DerivRootsError):
    """A Monte Carlo trial failed; carries what is needed to replay it."""

    def __init__(self, message, n=None, seed=None, trial=None):
        super().__init__(message)
        self.n = n
        self.seed = seed
        self.trial = trial
