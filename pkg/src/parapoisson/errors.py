"""Exception hierarchy.

Validation problems map to CLI exit code 2, numerical failures to exit code 3.
"""


class PoissonError(Exception):
    exit_code = 1


class ValidationError(PoissonError, ValueError):
    """Input violates a documented precondition."""

    exit_code = 2

    def __init__(self, message, violations=None):
        self.violations = list(violations or [message])
        super().__init__(message)


class ParseError(ValidationError):
    pass


class BadDimensions(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class FrameMismatch(ValidationError):
    pass


class NonPositive(ValidationError):
    pass


class InsufficientRange(ValidationError):
    pass


class ZeroInput(ValidationError):
    pass


class NumericalError(PoissonError, ArithmeticError):
    exit_code = 3


class NonConvergence(NumericalError):
    pass


class NotSolvable(NumericalError):
    pass


class SingularH(NumericalError):
    pass


class StepCollapse(NumericalError):
    pass


class NoConvergence(NumericalError):
    """Flow did not reach tolerance; ``report`` carries the best state."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class NoCandidate(NumericalError):
    pass
