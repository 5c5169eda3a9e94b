"""Exception hierarchy shared by the analytic models, simulator and CLI."""


class TriageQueueError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(TriageQueueError, ValueError):
    """An input lies outside its documented domain."""


class NumericalError(TriageQueueError, ArithmeticError):
    """A numerical procedure failed or produced an unusable result."""


class UnstableSystemError(NumericalError):
    """The queue (or a sub-queue) is not positive recurrent."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap.

    The last residual is kept on ``residual`` so callers can decide
    whether the chain was merely ill-conditioned or actually unstable.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"unstable-or-ill-conditioned: {message} (residual {residual:.3e})")
        self.residual = residual


class DegenerateBoundaryError(NumericalError):
    """The boundary balance equations of a QBD are singular."""


class MomentInfeasibleError(NumericalError):
    """A moment triple cannot belong to any positive distribution."""


class AbsorbingStructureError(NumericalError):
    """A requested end state cannot be reached in a passage-time analysis."""


class ModelNotCoveredError(ValidationError):
    """The scenario falls outside the supported workflow models."""
