"""Optimal dividend barriers for regime-switching Brownian reserves.

The package computes optimal dividend policies for a firm whose reserves
follow a Brownian motion with drift, volatility and discount rate modulated
by a finite-state Markov chain:

* :mod:`divbarrier.model` — model description, validation, JSON I/O.
* :mod:`divbarrier.analytics` — single-regime closed forms (scale function,
  optimal barrier, a-priori bounds, resolvent density).
* :mod:`divbarrier.fixedpoint` — N-regime grid solver built on a contraction
  operator with a two-sided (sandwiching) iteration.
* :mod:`divbarrier.two_regime` — exact piecewise-analytic solver for two
  regimes, covering both the all-positive-drift case and the mixed-sign
  case with a liquidation band.
* :mod:`divbarrier.montecarlo` — path simulation of the controlled reserves,
  the independent check on every analytic result.
* :mod:`divbarrier.cli` — ``divbarrier`` command-line frontend.
"""

from .analytics import (
    BoundPair,
    RootPair,
    ScaleValues,
    SingleRegimeSolution,
    apriori_bounds,
    characteristic_roots,
    resolvent_density,
    scale_function,
    single_regime_barrier,
    single_regime_solution,
    single_regime_value,
)
from .errors import (
    BadGeneratorRowSum,
    BarrierOutOfRange,
    DegenerateVolatility,
    DimensionMismatch,
    DividendSolverError,
    DriftHypothesisViolated,
    InvalidBand,
    LiquidateEverywhere,
    MaximumAtCap,
    ModelValidationError,
    NegativeOffDiagonal,
    NoConvergence,
    NonPositiveDiscount,
    NonPositiveDrift,
    NonPositiveVolatility,
    NotConcavePayoff,
    OrderingUnresolved,
    OutOfRange,
    RootIsolationFailure,
    SingularLinearSystem,
)
from .fixedpoint import (
    BarrierPolicy,
    GridFunction,
    IterationReport,
    apply_Tb,
    barrier_objective,
    barrier_value,
    best_barrier_for_payoff,
    contraction_constant,
    hjb_residual,
    solve,
)
from .model import (
    DriftCase,
    EffectiveRate,
    RegimeModel,
    RegimeParams,
    drift_sign_case,
    dump_model,
    effective_rates,
    load_model,
    theta_array,
    two_state_model,
    validate,
)
from .montecarlo import (
    DominanceReport,
    ProbeResult,
    SimConfig,
    SimEstimate,
    dominance_probe,
    dump_paths,
    simulate_barrier,
    simulate_liquidation_dividend,
)
from .two_regime import (
    LiquidationDiagnostic,
    NegativeCaseSolution,
    PositiveCaseSolution,
    QuarticRoots,
    evaluate,
    liquidation_levels,
    quartic_roots,
    solve_negative,
    solve_positive,
)

__version__ = "0.1.0"

__all__ = [
    "BadGeneratorRowSum",
    "BarrierOutOfRange",
    "BarrierPolicy",
    "BoundPair",
    "DegenerateVolatility",
    "DimensionMismatch",
    "DividendSolverError",
    "DominanceReport",
    "DriftCase",
    "DriftHypothesisViolated",
    "EffectiveRate",
    "GridFunction",
    "InvalidBand",
    "IterationReport",
    "LiquidateEverywhere",
    "LiquidationDiagnostic",
    "MaximumAtCap",
    "ModelValidationError",
    "NegativeCaseSolution",
    "NegativeOffDiagonal",
    "NoConvergence",
    "NonPositiveDiscount",
    "NonPositiveDrift",
    "NonPositiveVolatility",
    "NotConcavePayoff",
    "OrderingUnresolved",
    "OutOfRange",
    "PositiveCaseSolution",
    "ProbeResult",
    "QuarticRoots",
    "RegimeModel",
    "RegimeParams",
    "RootIsolationFailure",
    "RootPair",
    "ScaleValues",
    "SimConfig",
    "SimEstimate",
    "SingleRegimeSolution",
    "SingularLinearSystem",
    "apply_Tb",
    "apriori_bounds",
    "barrier_objective",
    "barrier_value",
    "best_barrier_for_payoff",
    "characteristic_roots",
    "contraction_constant",
    "dominance_probe",
    "drift_sign_case",
    "dump_model",
    "dump_paths",
    "effective_rates",
    "evaluate",
    "hjb_residual",
    "liquidation_levels",
    "load_model",
    "quartic_roots",
    "resolvent_density",
    "scale_function",
    "simulate_barrier",
    "simulate_liquidation_dividend",
    "single_regime_barrier",
    "single_regime_solution",
    "single_regime_value",
    "solve",
    "solve_negative",
    "solve_positive",
    "theta_array",
    "two_state_model",
    "validate",
]
