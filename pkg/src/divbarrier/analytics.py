"""Single-regime closed forms.

For a Brownian reserve process with drift ``mu``, volatility ``sigma`` and
killing/discount rate ``q`` the scale function

    W(x) = (2/sigma^2) * (exp(lam_plus x) - exp(lam_minus x)) / (lam_plus - lam_minus)

is the increasing solution of  (sigma^2/2) W'' + mu W' - q W = 0 with
W(0) = 0, W'(0) = 2/sigma^2.  Everything in this module — optimal barrier,
value function, resolvent density, a-priori bounds — is an explicit
expression in W and its characteristic roots ``lam_plus/lam_minus``.

All formulas are evaluated in cancellation-free arrangements: the difference
of exponentials is written exp(lam_plus x) * (-expm1(-(lam_plus-lam_minus) x))
so small ``x`` loses no precision, and the resolvent density is expanded into
a sum of nonnegative terms whose exponents are all nonpositive on its domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DegenerateVolatility,
    DriftHypothesisViolated,
    NonPositiveDrift,
    OutOfRange,
)
from .model import RegimeModel, validate

# The closed-form barrier and the zero of W'' are computed independently and
# must agree to this tolerance (double-entry bookkeeping on the most-used
# constant in the library).
BARRIER_CROSSCHECK_TOL = 1e-8


@dataclass(frozen=True)
class RootPair:
    """Roots of (sigma^2/2) lam^2 + mu lam - q = 0, sorted ascending."""

    lambda_minus: float
    lambda_plus: float

    @property
    def spread(self) -> float:
        return self.lambda_plus - self.lambda_minus


@dataclass(frozen=True)
class ScaleValues:
    """Scale function value and its first two derivatives at a point."""

    value: float
    derivative: float
    second_derivative: float


def characteristic_roots(mu: float, sigma: float, q: float) -> RootPair:
    """Roots lam(+-) = -mu/sigma^2 +- sqrt((mu/sigma^2)^2 + 2q/sigma^2).

    The larger-magnitude root is evaluated directly; the other comes from
    the product lam_plus * lam_minus = -2q/sigma^2, which avoids the
    subtractive cancellation of the textbook formula when |mu| dominates.

    Parameters
    ----------
    mu, sigma, q : float
        Drift, volatility (> 0) and killing rate (>= 0).

    Returns
    -------
    RootPair
    """
    if sigma <= 0.0:
        raise DegenerateVolatility(f"sigma = {sigma} <= 0")
    if q < 0.0:
        raise ValueError(f"killing rate q = {q} < 0")
    s = mu / (sigma * sigma)
    t = 2.0 * q / (sigma * sigma)
    disc = np.sqrt(s * s + t)
    if disc == 0.0:
        return RootPair(lambda_minus=0.0, lambda_plus=0.0)
    if s >= 0.0:
        lam_minus = -s - disc
        lam_plus = t / (s + disc)
    else:
        lam_plus = -s + disc
        lam_minus = -t / (disc - s)
    return RootPair(lambda_minus=float(lam_minus), lambda_plus=float(lam_plus))


def scale_function(mu: float, sigma: float, q: float, x):
    """Scale function W and derivatives W', W'' at ``x`` (scalar or array).

    Evaluated as W(x) = (2/sigma^2) e^{lam_plus x} (-expm1(-spread*x))/spread,
    exact at x = 0 and monotone increasing; derivatives are termwise.

    Parameters
    ----------
    mu, sigma : float
        Drift and volatility (sigma > 0).
    q : float
        Killing rate, strictly positive.
    x : float or array_like
        Evaluation points, all >= 0.

    Returns
    -------
    ScaleValues
        Fields are floats for scalar ``x`` and arrays otherwise.
    """
    if q <= 0.0:
        raise ValueError(f"scale function needs q > 0, got {q}")
    roots = characteristic_roots(mu, sigma, q)
    lp, lm = roots.lambda_plus, roots.lambda_minus
    spread = roots.spread
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0.0):
        raise ValueError("scale function is only defined for x >= 0")
    pref = 2.0 / (sigma * sigma)
    grow = np.exp(lp * xa)
    fall = np.exp(-spread * xa)
    value = pref * grow * (-np.expm1(-spread * xa)) / spread
    deriv = pref * grow * (lp - lm * fall) / spread
    second = pref * grow * (lp * lp - lm * lm * fall) / spread
    if xa.ndim == 0:
        return ScaleValues(float(value), float(deriv), float(second))
    return ScaleValues(value, deriv, second)


def single_regime_barrier(mu: float, sigma: float, r: float) -> float:
    """Optimal dividend barrier for a single regime with drift mu > 0.

    Closed form a* = (sigma^2/kappa) * ln((kappa+mu)/(kappa-mu)) with
    kappa = sqrt(mu^2 + 2 r sigma^2); equivalently the unique zero of W''
    for killing rate r.  Both are computed and compared; a disagreement
    beyond BARRIER_CROSSCHECK_TOL means a bug and raises RuntimeError.
    """
    if mu <= 0.0:
        raise NonPositiveDrift(f"barrier formula requires mu > 0, got {mu}")
    if sigma <= 0.0:
        raise DegenerateVolatility(f"sigma = {sigma} <= 0")
    if r <= 0.0:
        raise ValueError(f"discount rate r = {r} <= 0")
    kappa = np.sqrt(mu * mu + 2.0 * r * sigma * sigma)
    a_closed = (sigma * sigma / kappa) * np.log((kappa + mu) / (kappa - mu))

    # Independent computation: bisect the analytic W'' (negative at 0 for
    # mu > 0, eventually positive since lam_plus^2 e^{lam_plus x} dominates).
    def curvature(xx):
        return scale_function(mu, sigma, r, xx).second_derivative

    hi = 2.0 * a_closed + 1.0
    while curvature(hi) <= 0.0:
        hi *= 2.0
    a_root = brentq(curvature, 0.0, hi, xtol=1e-12, rtol=1e-15)
    if abs(a_root - a_closed) > BARRIER_CROSSCHECK_TOL * max(1.0, a_closed):
        raise RuntimeError(
            f"barrier cross-check failed: closed form {a_closed!r} vs "
            f"curvature root {a_root!r}"
        )
    return float(a_closed)


@dataclass(frozen=True)
class SingleRegimeSolution:
    """Optimal barrier and value function for one regime in isolation.

    The value function is W(x)/W'(a*) up to the barrier a* and continues
    with unit slope beyond; it is C^1 at a* with V(a*) = mu/r.

    Attributes
    ----------
    barrier : float
        The optimal level a*.
    roots : RootPair
        Characteristic roots for killing rate ``discount``.
    mu, sigma, discount : float
        The regime parameters.
    """

    barrier: float
    roots: RootPair
    mu: float
    sigma: float
    discount: float
    _norm: float  # W'(a*), the smooth-fit normalizer

    def value(self, x):
        """V*(x), vectorized over ``x``."""
        xa = np.asarray(x, dtype=float)
        below = np.minimum(xa, self.barrier)
        w = scale_function(self.mu, self.sigma, self.discount, below).value
        out = np.where(
            xa <= self.barrier,
            w / self._norm,
            xa - self.barrier + self.mu / self.discount,
        )
        return float(out) if xa.ndim == 0 else out

    def derivative(self, x):
        """V*'(x), vectorized; equals 1 beyond the barrier."""
        xa = np.asarray(x, dtype=float)
        below = np.minimum(xa, self.barrier)
        wp = scale_function(self.mu, self.sigma, self.discount, below).derivative
        out = np.where(xa <= self.barrier, wp / self._norm, 1.0)
        return float(out) if xa.ndim == 0 else out


def single_regime_solution(mu: float, sigma: float, r: float) -> SingleRegimeSolution:
    """Construct the closed-form single-regime solution (barrier + value)."""
    a_star = single_regime_barrier(mu, sigma, r)
    roots = characteristic_roots(mu, sigma, r)
    norm = scale_function(mu, sigma, r, a_star).derivative
    return SingleRegimeSolution(
        barrier=a_star, roots=roots, mu=mu, sigma=sigma, discount=r, _norm=norm
    )


def single_regime_value(mu: float, sigma: float, r: float, x):
    """V*(x) for the optimal single-regime barrier strategy."""
    return single_regime_solution(mu, sigma, r).value(x)


def resolvent_density(mu: float, sigma: float, q: float, b: float, x, y):
    """Occupation density of the reserve reflected at ``b``, killed at 0/rate q.

    The textbook expression W(x) W'(b-y)/W'(b) - 1{x>=y} W(x-y) suffers
    catastrophic cancellation (both terms grow like e^{lam_plus x}).  The
    implementation expands it into nonnegative terms whose exponents are all
    <= 0 on the domain 0 <= x, y <= b:

        x >= y:  (c/spread) E(y) [lp e^{lm (x-y)} + |lm| e^{lp (x-b) + lm (b-y)}] / D
        x <  y:  (c/spread) E(x)  e^{lp (x-y)} (lp + |lm| e^{-spread (b-y)}) / D

    with c = 2/sigma^2, E(t) = -expm1(-spread t), D = lp + |lm| e^{-spread b}.

    Parameters
    ----------
    mu, sigma, q : float
        Regime parameters, q > 0.
    b : float
        Reflection level, b > 0.
    x, y : float or array_like
        Evaluation point and density argument, both within [0, b].

    Returns
    -------
    float or numpy.ndarray
        The density value(s), nonnegative.
    """
    if q <= 0.0:
        raise ValueError(f"resolvent density needs q > 0, got {q}")
    if b <= 0.0:
        raise OutOfRange(f"reflection level b = {b} <= 0")
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if np.any((xa < 0.0) | (xa > b)):
        raise OutOfRange(f"x outside [0, {b}]")
    if np.any((ya < 0.0) | (ya > b)):
        raise OutOfRange(f"y outside [0, {b}]")
    roots = characteristic_roots(mu, sigma, q)
    lp, lm, spread = roots.lambda_plus, roots.lambda_minus, roots.spread
    alm = -lm  # |lambda_minus|, positive since q > 0
    c = 2.0 / (sigma * sigma)
    denom = lp + alm * np.exp(-spread * b)

    xa_b, ya_b = np.broadcast_arrays(xa, ya)
    upper = (
        -np.expm1(-spread * ya_b)
        * (
            lp * np.exp(lm * (xa_b - ya_b))
            + alm * np.exp(lp * (xa_b - b) + lm * (b - ya_b))
        )
    )
    lower = (
        -np.expm1(-spread * xa_b)
        * np.exp(lp * (xa_b - ya_b))
        * (lp + alm * np.exp(-spread * (b - ya_b)))
    )
    out = (c / spread) * np.where(xa_b >= ya_b, upper, lower) / denom
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BoundPair:
    """A-priori sandwich for the multi-regime value function.

    Both members are single-regime solutions with unit volatility; the
    upper one pairs the most favorable drift ratio with the least
    punishing discount ratio, the lower one the reverse.
    """

    lower: SingleRegimeSolution
    upper: SingleRegimeSolution


def apriori_bounds(model: RegimeModel) -> BoundPair:
    """Explicit value-function bounds from the per-regime ratios.

    upper: drift max_i mu_i/sigma_i^2, discount min_i r_i/sigma_i^2;
    lower: drift min_i mu_i/sigma_i^2, discount max_i r_i/sigma_i^2;
    both with sigma = 1.  Requires every drift to be positive.
    """
    model = validate(model)
    mu_ratio = model.mu / model.sigma ** 2
    r_ratio = model.discount / model.sigma ** 2
    if np.min(mu_ratio) <= 0.0:
        raise DriftHypothesisViolated(
            "a-priori bounds require min_i mu_i/sigma_i^2 > 0; "
            f"got {np.min(mu_ratio)}"
        )
    upper = single_regime_solution(float(np.max(mu_ratio)), 1.0, float(np.min(r_ratio)))
    lower = single_regime_solution(float(np.min(mu_ratio)), 1.0, float(np.max(r_ratio)))
    return BoundPair(lower=lower, upper=upper)
