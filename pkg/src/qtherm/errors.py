"""Exception hierarchy shared by all qtherm modules."""


class QthermError(Exception):
    """Base class for library errors."""


class NotHermitian(QthermError):
    pass


class ConvergenceFailure(QthermError):
    pass


class DomainError(QthermError):
    pass


class ShapeMismatch(QthermError):
    pass


class OverflowError(QthermError, ArithmeticError):  # noqa: A001
    """Dimension or exponent outside the supported range."""


class FaithfulnessError(QthermError):
    pass


class NotInvariant(QthermError):
    pass


class QuadratureFailure(QthermError):
    pass


class NotTRI(QthermError):
    pass


class IncompatibleTimeReversal(QthermError):
    pass


class GridError(QthermError):
    pass


class LogBranchError(QthermError):
    pass


class SymbolRangeError(QthermError):
    pass


class ZeroCoherence(QthermError):
    pass


class ConfigError(QthermError):
    """Configuration problems; ``errors`` holds every (path, message) pair found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [("", errors)]
        self.errors = list(errors)
        msg = "; ".join(f"{p or '<root>'}: {m}" for p, m in self.errors)
        super().__init__(msg)
