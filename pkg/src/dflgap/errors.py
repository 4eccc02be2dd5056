"""Exception hierarchy shared by every module of the package."""


class DflGapError(Exception):
    """Base class for all package errors."""


# qp
class QpError(DflGapError):
    pass


class Infeasible(QpError):
    pass


class MaxIterations(QpError):
    pass


class IllConditioned(QpError):
    pass


class SingularKktSystem(QpError):
    pass


# stochastic
class EmptyDecisionSpace(DflGapError):
    pass


class SupportTooLarge(DflGapError):
    pass


class NoWitnessFound(DflGapError):
    pass


# facility location
class BudgetExceedsFacilities(DflGapError, ValueError):
    pass


class NonPositiveZeta(DflGapError, ValueError):
    pass


# data / learners
class TestCountTooLarge(DflGapError, ValueError):
    __test__ = False  # keep pytest from collecting it


class EmptyTrainingSet(DflGapError, ValueError):
    pass


class NonFiniteLoss(DflGapError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


# constructions
class WitnessInvalid(DflGapError, ValueError):
    pass


class InvariantViolation(DflGapError, ValueError):
    pass


class NoSupportingSet(DflGapError):
    pass


# harness
class ConfigError(DflGapError, ValueError):
    pass


class IoFailure(DflGapError, OSError):
    pass
