"""Exception hierarchy shared by all modules."""


class StcError(Exception):
    pass


class ContractViolation(StcError, ValueError):
    """Inputs violate an operation's preconditions (shapes, ordering, signs)."""


class DomainError(StcError, ValueError):
    """A parameter lies outside its declared domain, e.g. eta outside the box."""


class ConfigurationError(StcError, ValueError):
    pass


class InfeasibleTuningError(StcError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DivergenceError(StcError, ArithmeticError):
    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class UndefinedStatisticsError(StcError, ValueError):
    pass
