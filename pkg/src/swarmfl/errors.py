"""Shared exception types."""


class DomainError(ValueError):
    """Input outside an operation's mathematical domain."""


class NumericalFailure(RuntimeError):
    """An update or solve produced non-finite values."""


class UnsupportedArchitecture(ValueError):
    """Model too large for an exact (Hessian-based) computation."""


class ConstraintViolation(ValueError):
    """An offload plan violates one or more problem constraints.

    ``violations`` lists every violated constraint by name with its margin.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("infeasible plan:\n  " + "\n  ".join(self.violations))


class ScheduleError(ValueError):
    """Training-sequence schedule arithmetic does not hold."""


class ValidationError(ValueError):
    """Config or scenario document failed validation.

    ``problems`` lists every violation found, not only the first.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("validation failed:\n  " + "\n  ".join(self.problems))
