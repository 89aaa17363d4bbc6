"""Exception hierarchy shared by all modules."""


class LogSyncError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(LogSyncError, ValueError):
    pass


class WeakFieldDomainError(LogSyncError, ValueError):
    pass


class NumericalError(LogSyncError, ArithmeticError):
    pass


class CurvatureTooStrongError(LogSyncError, ValueError):
    pass


class SolverError(LogSyncError, RuntimeError):
    pass


class GeometryError(LogSyncError, ValueError):
    pass


class ProgramError(LogSyncError, RuntimeError):
    pass


class PhaseDisciplineError(LogSyncError, ValueError):
    pass


class LogicalSyncViolation(LogSyncError):
    """A reception arrived outside the writing phase.

    This is evidence rather than a crash: the receiving machine is left
    unchanged and the offending phase is kept on the exception.
    """

    def __init__(self, phase: float, eta: float, party: str | None = None):
        self.phase = phase
        self.eta = eta
        self.party = party
        super().__init__(
            f"arrival phase {phase!r} outside |phi| < (1-eta)/2 = {(1 - eta) / 2!r}"
        )


class NoEchoError(LogSyncError, LookupError):
    pass


class InconsistentEvidenceError(LogSyncError, ValueError):
    pass


class InvalidChoiceError(LogSyncError, ValueError):
    pass


class ModelValidationError(LogSyncError, ValueError):
    pass


class DomainError(LogSyncError, ValueError):
    pass


class UnsupportedError(LogSyncError, NotImplementedError):
    pass
