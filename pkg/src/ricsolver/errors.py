"""Exception types shared across the solver modules.

Everything derives from SolverError so callers can catch the library's
failures with one except clause without swallowing unrelated bugs.
"""


class SolverError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateK(SolverError):
    """The denominator defining the exponent k is numerically zero."""


class ComplexDiscriminant(SolverError):
    """A Riccati discriminant went negative; no real closed form exists."""


class NonadmissibleValueSign(SolverError):
    """(1-gamma)*v <= 0, so the ambiguity scaling Psi is undefined."""


class NonpositiveWealth(SolverError):
    """Wealth must be strictly positive for the power-utility value."""


class QuadratureBudgetExceeded(SolverError):
    """Adaptive quadrature could not meet tolerance within its panel budget."""


class FixedPointDivergence(SolverError):
    """The damped fixed-point iteration for w failed to converge."""


class StabilityViolation(SolverError):
    """Grid does not satisfy the finite-difference scheme's requirements."""


class SingularLinearSystem(SolverError):
    """The implicit finite-difference step produced a singular system."""


class ConfigError(SolverError):
    """Malformed configuration input (unknown key, unparsable value)."""
