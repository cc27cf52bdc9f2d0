"""Exception hierarchy shared by all solver modules."""


class PlateEigError(Exception):
    """Base class for errors raised by :mod:`plate_eig`."""


class InvalidArgumentError(PlateEigError, ValueError):
    pass


class NumericDegeneracyError(PlateEigError, ArithmeticError):
    pass


class UnsupportedCombinationError(PlateEigError, ValueError):
    pass


class InvalidPairError(PlateEigError, ValueError):
    """Two spaces cannot be linked by a prolongation."""


class OutOfDomainError(PlateEigError, ValueError):
    pass


class SingularMatrixError(PlateEigError, ArithmeticError):
    """Factorization failed. ``block`` names the failing subsystem, if known."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class InsufficientSpectrumError(PlateEigError):
    pass


class MaxIterationsError(PlateEigError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InvalidBasisError(PlateEigError, ValueError):
    pass


class DegenerateBasisError(PlateEigError):
    """The augmented multilevel basis lost (numerical) linear independence."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level
