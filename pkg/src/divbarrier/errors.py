"""Exception types shared across the solver package.

Every failure mode that callers are expected to handle has a dedicated
exception class; generic precondition breaches raise ValueError.
"""


class DividendSolverError(Exception):
    """Base class for all package-specific errors."""


# ---------------------------------------------------------------------------
# Model validation
# ---------------------------------------------------------------------------

class ModelValidationError(DividendSolverError):
    """A raw model description violates an invariant."""


class NonPositiveVolatility(ModelValidationError):
    """Some regime has sigma <= 0."""


class NonPositiveDiscount(ModelValidationError):
    """Some regime has a discount rate <= 0."""


class BadGeneratorRowSum(ModelValidationError):
    """A generator row does not sum to zero within tolerance."""


class NegativeOffDiagonal(ModelValidationError):
    """A generator off-diagonal entry is negative."""


class DimensionMismatch(ModelValidationError):
    """State count and generator shape (or input shapes) disagree."""


# ---------------------------------------------------------------------------
# Single-regime analytics
# ---------------------------------------------------------------------------

class DegenerateVolatility(DividendSolverError):
    """Volatility parameter is not strictly positive."""


class NonPositiveDrift(DividendSolverError):
    """The classical single-regime barrier requires mu > 0."""


class OutOfRange(DividendSolverError):
    """An evaluation point lies outside the admissible domain."""


class DriftHypothesisViolated(DividendSolverError):
    """The a-priori bounds require min_i mu_i / sigma_i^2 > 0."""


# ---------------------------------------------------------------------------
# Fixed-point solver
# ---------------------------------------------------------------------------

class BarrierOutOfRange(DividendSolverError):
    """A barrier level lies outside (0, x_cap]."""


class NotConcavePayoff(DividendSolverError):
    """Barrier selection needs an increasing, concave payoff per regime."""


class MaximumAtCap(DividendSolverError):
    """The barrier objective peaks at the grid cap; enlarge x_cap."""


class NoConvergence(DividendSolverError):
    """An iteration exceeded its certified iteration budget."""


# ---------------------------------------------------------------------------
# Two-regime closed forms
# ---------------------------------------------------------------------------

class RootIsolationFailure(DividendSolverError):
    """The quartic root brackets could not be established."""


class SingularLinearSystem(DividendSolverError):
    """A small dense linear system is numerically singular."""


class OrderingUnresolved(DividendSolverError):
    """Neither barrier labeling yields a consistent closed-form solution."""


class LiquidateEverywhere(DividendSolverError):
    """Immediate full payout is optimal at every reserve level in the
    negative-drift regime; carries the degenerate solution payload."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

class InvalidBand(DividendSolverError):
    """A liquidation level does not lie strictly below its barrier."""
