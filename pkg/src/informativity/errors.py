"""Exception hierarchy shared by all modules."""


class InformativityError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(InformativityError, ValueError):
    pass


class MissingStates(InformativityError, ValueError):
    pass


class DepthTooLarge(InformativityError, ValueError):
    pass


class MultiExperimentError(InformativityError, ValueError):
    """Raised where an operation is only defined for a single experiment."""


class NonSquare(InformativityError, ValueError):
    pass


class RankDeficient(InformativityError, ValueError):
    pass


class Unstable(InformativityError, ValueError):
    pass


class NotStabilizable(InformativityError):
    pass


class NotDeadbeatAssignable(InformativityError):
    pass


class UnobservableUnitCircleMode(InformativityError):
    pass


class MalformedProblem(InformativityError, ValueError):
    pass


class LmiInfeasible(InformativityError):
    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class LmiUnbounded(InformativityError):
    pass


class NumericalError(InformativityError, ArithmeticError):
    """A computation failed for numerical rather than mathematical reasons."""


class NotInformative(InformativityError):
    """The data do not allow the requested conclusion or design.

    ``certificate`` carries whatever evidence was gathered (failed rank test,
    LMI dual certificate, ...), ready for JSON serialization.
    """

    def __init__(self, reason, certificate=None):
        super().__init__(reason)
        self.reason = reason
        self.certificate = certificate if certificate is not None else {}


class DepthInvalid(InformativityError, ValueError):
    pass


class RankConditionFailed(InformativityError):
    def __init__(self, message, achieved_rank=None, required_rank=None):
        super().__init__(message)
        self.achieved_rank = achieved_rank
        self.required_rank = required_rank
