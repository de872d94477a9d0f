# exceptions.py


class SamatError(Exception):
    """Base class for every error raised by the toolkit."""


class NotPositiveDefinite(SamatError, ValueError):
    pass


class BadDim(SamatError, ValueError):
    pass


class DimMismatch(SamatError, ValueError):
    pass


class ConvergenceFailure(SamatError, RuntimeError):
    pass


class DivisionByZero(SamatError, ZeroDivisionError):
    pass


class InfeasibleStart(SamatError, ValueError):
    """A start point could not be moved onto the power constraint surface."""


class GradientMismatch(SamatError, ValueError):
    """Analytic gradient disagrees with central finite differences."""


class ScenarioConfigError(SamatError, ValueError):
    pass
