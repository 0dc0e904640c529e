"""Exception hierarchy shared by the package."""


class StarHJBError(Exception):
    """Base class for all package errors."""


class DomainError(StarHJBError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ConsistencyError(StarHJBError, ValueError):
    """Ray values that must agree at the vertex do not."""


class PreconditionError(StarHJBError, ValueError):
    """Inputs fail a certification required by the operation."""


class NoRootError(StarHJBError, RuntimeError):
    """Bracketing a root of the vertex equation failed."""


class ConvergenceError(StarHJBError, RuntimeError):
    """The nonlinear solver hit its iteration cap.

    ``history`` holds the residual recorded after each sweep.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)
