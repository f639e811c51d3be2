"""Regime-switching market model: parameters, validation, serialization.

The reserve process follows a Brownian motion whose drift ``mu``, volatility
``sigma`` and discount rate ``discount`` are modulated by a finite-state
Markov chain with generator matrix ``generator`` (off-diagonal entry
``q_ij >= 0`` is the switch rate from regime ``i`` to regime ``j``; rows sum
to zero).  All solvers consume the validated, immutable :class:`RegimeModel`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import (
    BadGeneratorRowSum,
    DimensionMismatch,
    ModelValidationError,
    NegativeOffDiagonal,
    NonPositiveDiscount,
    NonPositiveVolatility,
)

# Absolute tolerance for generator row sums; rows within tolerance are
# re-normalized by recomputing the diagonal, making downstream effective
# rates theta_i = discount_i - q_ii exact.
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class RegimeParams:
    """Per-regime market parameters.

    Attributes
    ----------
    mu : float
        Reserve drift per unit time (any sign).
    sigma : float
        Volatility per square-root time; strictly positive.
    discount : float
        Discount rate per unit time; strictly positive.
    """

    mu: float
    sigma: float
    discount: float


@dataclass(frozen=True)
class EffectiveRate:
    """Killing rate before the first switch: theta = discount - q_ii."""

    theta: float


class DriftCase(Enum):
    """Sign pattern of the drifts, used to route the solve."""

    ALL_POSITIVE = "all_positive"
    MIXED_SIGN = "mixed_sign"
    ALL_NONPOSITIVE = "all_nonpositive"


@dataclass(frozen=True)
class RegimeModel:
    """A validated regime-switching model.

    Construct via :func:`validate`; instances are immutable and safe to
    share read-only across threads.

    Attributes
    ----------
    states : tuple of RegimeParams
        Ordered per-regime parameters.
    generator : numpy.ndarray
        Square generator matrix (read-only view).
    """

    states: tuple
    generator: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def mu(self) -> np.ndarray:
        return np.array([s.mu for s in self.states])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([s.sigma for s in self.states])

    @property
    def discount(self) -> np.ndarray:
        return np.array([s.discount for s in self.states])

    def to_dict(self) -> dict:
        """JSON-ready description (inverse of :func:`validate`)."""
        return {
            "states": [
                {"mu": s.mu, "sigma": s.sigma, "discount": s.discount}
                for s in self.states
            ],
            "generator": [[float(v) for v in row] for row in self.generator],
        }


def _as_float(value, what: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ModelValidationError(f"{what} is not a number: {value!r}") from None
    if not np.isfinite(out):
        raise ModelValidationError(f"{what} is not finite: {value!r}")
    return out


def validate(raw) -> RegimeModel:
    """Validate a raw model description.

    Parameters
    ----------
    raw : dict or RegimeModel
        Either an already-validated model (returned as-is) or a mapping
        ``{"states": [{"mu","sigma","discount"}...], "generator": [[...]]}``.

    Returns
    -------
    RegimeModel

    Raises
    ------
    NonPositiveVolatility, NonPositiveDiscount, BadGeneratorRowSum,
    NegativeOffDiagonal, DimensionMismatch
        Naming the first violated invariant.
    """
    if isinstance(raw, RegimeModel):
        return raw
    if not isinstance(raw, dict):
        raise ModelValidationError(
            f"model description must be a mapping, got {type(raw).__name__}"
        )
    try:
        raw_states = raw["states"]
        raw_gen = raw["generator"]
    except KeyError as exc:
        raise ModelValidationError(f"model description lacks key {exc}") from None

    if not isinstance(raw_states, Sequence) or len(raw_states) < 1:
        raise DimensionMismatch("model needs at least one state")

    states = []
    for k, entry in enumerate(raw_states):
        if not isinstance(entry, dict):
            raise ModelValidationError(f"state {k} must be a mapping")
        mu = _as_float(entry.get("mu"), f"state {k} mu")
        sigma = _as_float(entry.get("sigma"), f"state {k} sigma")
        discount = _as_float(entry.get("discount"), f"state {k} discount")
        if sigma <= 0.0:
            raise NonPositiveVolatility(f"state {k}: sigma = {sigma} <= 0")
        if discount <= 0.0:
            raise NonPositiveDiscount(f"state {k}: discount = {discount} <= 0")
        states.append(RegimeParams(mu=mu, sigma=sigma, discount=discount))

    n = len(states)
    gen = np.asarray(raw_gen, dtype=float)
    if gen.ndim != 2 or gen.shape != (n, n):
        raise DimensionMismatch(
            f"generator shape {gen.shape} does not match state count {n}"
        )
    if not np.all(np.isfinite(gen)):
        raise ModelValidationError("generator contains non-finite entries")

    off_diag = gen.copy()
    np.fill_diagonal(off_diag, 0.0)
    if np.any(off_diag < 0.0):
        i, j = np.argwhere(off_diag < 0.0)[0]
        raise NegativeOffDiagonal(f"generator[{i}][{j}] = {gen[i, j]} < 0")

    row_sums = gen.sum(axis=1)
    bad = np.abs(row_sums) > ROW_SUM_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise BadGeneratorRowSum(
            f"generator row {i} sums to {row_sums[i]:.3e} (tolerance {ROW_SUM_TOL})"
        )

    # Re-normalize exactly: q_ii := -sum of the row's off-diagonals.
    clean = off_diag
    np.fill_diagonal(clean, -off_diag.sum(axis=1))
    clean.flags.writeable = False
    return RegimeModel(states=tuple(states), generator=clean)


def effective_rates(model: RegimeModel) -> list:
    """Per-regime killing rates theta_i = discount_i - q_ii (all > 0)."""
    model = validate(model)
    return [
        EffectiveRate(theta=s.discount - float(model.generator[i, i]))
        for i, s in enumerate(model.states)
    ]


def theta_array(model: RegimeModel) -> np.ndarray:
    """Effective rates as an array (convenience for the solvers)."""
    return np.array([e.theta for e in effective_rates(model)])


def drift_sign_case(model: RegimeModel) -> DriftCase:
    """Classify the drift signs to route the solve."""
    model = validate(model)
    mus = model.mu
    if np.all(mus > 0.0):
        return DriftCase.ALL_POSITIVE
    if np.all(mus <= 0.0):
        return DriftCase.ALL_NONPOSITIVE
    return DriftCase.MIXED_SIGN


def load_model(path) -> RegimeModel:
    """Read and validate a model from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return validate(json.load(fh))


def dump_model(model: RegimeModel, path) -> None:
    """Write a validated model back to a JSON file."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=2)
        fh.write("\n")


def two_state_model(mu0, sigma0, q00, r0, mu1, sigma1, q11, r1) -> RegimeModel:
    """Convenience constructor for two-regime models (q00, q11 <= 0)."""
    return validate(
        {
            "states": [
                {"mu": mu0, "sigma": sigma0, "discount": r0},
                {"mu": mu1, "sigma": sigma1, "discount": r1},
            ],
            "generator": [[q00, -q00], [-q11, q11]],
        }
    )
