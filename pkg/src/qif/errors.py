"""Exception hierarchy for the qif package."""


class QIFError(Exception):
    """Base class for all errors raised by qif."""


class NonFiniteInput(QIFError, ValueError):
    pass


class UnbalancedPanel(QIFError, ValueError):
    pass


class RaggedCovariates(QIFError, ValueError):
    pass


class UnsupportedDimension(QIFError, ValueError):
    pass


class NotSymmetric(QIFError, ValueError):
    pass


class SingularCurvature(QIFError, ArithmeticError):
    pass


class MaxIterationsExceeded(QIFError, RuntimeError):
    """Raised only when the caller asks for strict convergence."""


class NotConverged(QIFError, RuntimeError):
    pass


class RankDeficientConstraint(QIFError, ValueError):
    pass


class DegenerateDf(QIFError, ValueError):
    pass


class DomainError(QIFError, ValueError):
    pass
