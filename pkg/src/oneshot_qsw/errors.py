"""Exception hierarchy shared by every module."""


class QSWError(Exception):
    """Base class for all errors raised by this package."""


class NameClash(QSWError, KeyError):
    """Duplicate or unknown register name."""

    def __str__(self):
        # KeyError quotes its argument; keep messages readable
        return str(self.args[0]) if self.args else ""


class ShapeError(QSWError, ValueError):
    """Dimension mismatch or malformed operator."""


class ContractViolation(QSWError, ValueError):
    """A documented precondition on an operator or state does not hold."""


class SupportError(QSWError, ValueError):
    """Support of the first argument is not contained in the support of the second."""


class DomainError(QSWError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class NumericalError(QSWError, ArithmeticError):
    """A numerical search failed to bracket its target."""


class CapacityError(QSWError, MemoryError):
    """The requested dense construction exceeds the configured dimension cap."""
