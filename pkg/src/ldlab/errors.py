"""Exception types raised by ldlab."""


class LdlabError(Exception):
    """Base class for library errors."""


class DomainError(LdlabError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularityError(LdlabError, ArithmeticError):
    """An unbounded observable was evaluated at its singular point."""


class PrecisionError(LdlabError):
    """The orbit window cannot resolve the requested distances."""


class BudgetError(LdlabError):
    """A computation would exceed its cost or memory budget."""

    def __init__(self, message, suggestion=None):
        super().__init__(message)
        self.suggestion = suggestion


class InsufficientDataError(LdlabError):
    """Not enough reliable points to produce a fit."""


class CertificateError(LdlabError):
    """A sampled point failed the lower-bound certificate."""

    def __init__(self, message, n=None, failures=None):
        super().__init__(message)
        self.n = n
        self.failures = failures or []
