"""Exception types raised across the package."""


class QuasidiscError(Exception):
    """Base class for every error raised by quasidisc."""


class NumericalConsistencyError(QuasidiscError, ValueError):
    """Inputs fail an invariant that should hold up to rounding."""


class InvalidFrameError(QuasidiscError, ValueError):
    pass


class DivergenceError(QuasidiscError, ValueError):
    pass


class DomainError(QuasidiscError, ValueError):
    pass


class NotUnivalentError(QuasidiscError, ValueError):
    pass


class CriticalPointError(QuasidiscError, ValueError):
    pass


class ResolutionError(QuasidiscError, RuntimeError):
    """Refinement did not reach the requested agreement.

    The best value obtained so far is kept in ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class OutOfCertificateError(QuasidiscError, ValueError):
    pass


class DegenerateCompositionError(QuasidiscError, ValueError):
    pass


class LeafDegeneracyError(QuasidiscError, ValueError):
    def __init__(self, message, rho=None):
        super().__init__(message)
        self.rho = rho


class HypothesisViolationError(QuasidiscError, ValueError):
    pass


class OutOfRegimeError(QuasidiscError, ValueError):
    pass


class SeedingError(QuasidiscError, RuntimeError):
    pass


class RemeshRequiredError(QuasidiscError, RuntimeError):
    pass


class OutOfDomainError(QuasidiscError, ValueError):
    pass


class ChartError(QuasidiscError, ValueError):
    pass


class SweepFailureError(QuasidiscError, RuntimeError):
    pass


class InsufficientRowsError(QuasidiscError, ValueError):
    pass
