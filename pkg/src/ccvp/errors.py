"""Exception hierarchy shared by all modules."""


class CCVPError(Exception):
    """Base class for every error raised by this package."""


class UsageError(CCVPError, ValueError):
    """Bad arguments: dimension mismatch, index out of range, invalid config."""


class ParseError(UsageError):
    """Malformed expression, problem file or certificate file."""

    def __init__(self, message, line=1, column=1):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class PreconditionError(CCVPError):
    """An operation's precondition (e.g. feasibility of the point) fails."""


class UnsupportedError(CCVPError):
    """The requested check is not available for this cone or problem size."""


class CertificateError(CCVPError):
    """A certificate violates its structural requirements."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)


class NumericalError(CCVPError, ArithmeticError):
    """A non-finite value showed up during a computation."""

    def __init__(self, message, x=None):
        self.x = x
        super().__init__(message)


class DivergenceError(NumericalError):
    """The penalty iterates escaped to infinity; the trajectory is attached."""

    def __init__(self, message, trajectory=()):
        self.trajectory = list(trajectory)
        super().__init__(message)
