"""Exception hierarchy shared across the package."""


class IsoCurvError(Exception):
    """Base class for all package errors."""


class InputError(IsoCurvError, ValueError):
    """Malformed or invalid user input (shapes, files, specs)."""


class ShapeError(InputError):
    pass


class CurvatureError(InputError):
    pass


class PreconditionError(IsoCurvError, ValueError):
    """An operation was called outside its documented domain."""


class RankDeficientError(PreconditionError):
    pass


class SvdConvergenceError(IsoCurvError, ArithmeticError):
    pass


class DivergenceError(IsoCurvError, ArithmeticError):
    """Iterates blew up; usually a non-coercive objective."""


class ConvergenceError(IsoCurvError, ArithmeticError):
    """Iteration cap reached before the stopping rule fired."""


class ProbeError(IsoCurvError, ValueError):
    pass
