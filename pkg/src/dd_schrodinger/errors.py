"""Exception hierarchy shared by all modules."""


class DDError(Exception):
    """Base class for every error raised by this package."""


class BadGeometry(DDError, ValueError):
    pass


class BadConfig(DDError, ValueError):
    pass


class DimensionMismatch(DDError, ValueError):
    pass


class DimensionTooLarge(DDError, ValueError):
    pass


class SingularMatrix(DDError, ArithmeticError):
    pass


class Breakdown(DDError, ArithmeticError):
    """Krylov breakdown before the residual reached the tolerance."""


class Diverged(DDError, ArithmeticError):
    pass


class InnerSolveFailed(DDError, ArithmeticError):
    pass


class ParseError(DDError, ValueError):
    def __init__(self, message, position=None, text=None):
        self.position = position
        self.text = text
        where = "" if position is None else f" at position {position}"
        super().__init__(f"{message}{where}")


class EvalError(DDError, ArithmeticError):
    pass


class NotConstantPotential(DDError, ValueError):
    pass


class TopologyMismatch(DDError, ValueError):
    pass


class ExchangeTimeout(DDError, TimeoutError):
    pass
