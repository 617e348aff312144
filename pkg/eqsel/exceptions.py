"""
Exceptions raised by eqsel
==========================

All domain errors derive from :class:`EqselError` so callers (and the CLI)
can catch them in one place. Each also derives from the builtin exception
that best describes it.
"""


class EqselError(Exception):
    """Base class for eqsel errors"""


class ShapeError(EqselError, ValueError):
    """Tensor or policy shape does not match the game"""


class GuardExceededError(EqselError, ValueError):
    """A size guard (nodes, stage-cells, tree enumeration) was exceeded"""


class NonErgodicError(EqselError, ValueError):
    """Dynamics are not ergodic: bad mistake rate or several closed
    classes"""


class SingularSolveError(EqselError, ArithmeticError):
    """A stationary solve failed or its residual check did not pass"""


class PreconditionError(EqselError, ValueError):
    """A named precondition of an analysis does not hold"""
