"""Closed-form machinery for two-regime models.

For exactly two regimes the coupled value ODEs admit explicit solutions
built from the four real roots of a quartic characteristic polynomial.
This module isolates those roots, assembles the 4x4 linear systems that
express boundary and pasting conditions, and drives a damped quasi-Newton
iteration on the remaining free-boundary (smooth-fit) equations.  Two
structural cases are covered:

* both drifts positive -> a plain two-barrier policy (``solve_positive``);
* one negative, one positive drift -> a policy that liquidates the firm
  below a level d0 in the losing regime and pays dividends above
  per-regime barriers (``solve_negative``).

All piecewise value functions are represented as sums of exponentials
plus an affine part, with per-branch reference points so that large
exponents are only ever evaluated on non-positive arguments during
assembly.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .analytics import characteristic_roots, single_regime_barrier
from .errors import (
    LiquidateEverywhere,
    NoConvergence,
    OrderingUnresolved,
    OutOfRange,
    RootIsolationFailure,
    SingularLinearSystem,
)
from .model import RegimeModel, theta_array

logger = logging.getLogger(__name__)

__all__ = [
    "QuarticRoots",
    "PositiveCaseSolution",
    "NegativeCaseSolution",
    "LiquidationDiagnostic",
    "quartic_roots",
    "solve_positive",
    "solve_negative",
    "liquidation_levels",
    "evaluate",
]

#: outer nonlinear system: relative residual target and iteration budget
DEFAULT_TOL = 1e-10
_MAX_ITER = 200
_MAX_BACKTRACK = 30
_N_JITTER = 8
#: exponents are clipped here before np.exp to keep bad quasi-Newton
#: excursions from overflowing; the clipped value still dwarfs any real
#: residual so backtracking rejects the step.
_EXP_CLIP = 700.0


def _two_state(model: RegimeModel):
    if model.n_states != 2:
        raise ValueError(
            f"two-regime closed forms need exactly 2 states, got {model.n_states}"
        )
    mu = model.mu
    sg = model.sigma
    th = theta_array(model)
    q = np.asarray(model.generator, dtype=float)
    if q[0, 1] <= 0.0 or q[1, 0] <= 0.0:
        raise ValueError(
            "closed forms require strictly positive switch rates between the "
            f"two regimes, got q01={q[0, 1]}, q10={q[1, 0]}"
        )
    return mu, sg, th, q


def _exp(z):
    return np.exp(np.minimum(z, _EXP_CLIP))


# ---------------------------------------------------------------------------
# Quartic characteristic roots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuarticRoots:
    """The four real characteristic exponents of the coupled system.

    ``lam`` is sorted ascending: lam[0] < lam[1] < 0 < lam[2] < lam[3].
    """

    lam: tuple

    def as_array(self) -> np.ndarray:
        return np.asarray(self.lam, dtype=float)


def _regime_poly(mu, sg, th, k, x):
    """F_k(x) = (sigma_k^2/2) x^2 + mu_k x - theta_k."""
    return 0.5 * sg[k] * sg[k] * x * x + mu[k] * x - th[k]


def quartic_roots(model: RegimeModel, _polish_steps: int = 3) -> QuarticRoots:
    """Isolate the four real roots of F_0(x) F_1(x) = q01 * q10.

    Each regime's own quadratic F_k has one negative and one positive
    root; the product polynomial is positive at 0 and at +-infinity and
    negative at every single-regime root, which hands us four guaranteed
    sign-change brackets.  Bisection inside each bracket is finished with
    a few Newton steps on the expanded quartic.
    """
    mu, sg, th, q = _two_state(model)
    rhs = q[0, 1] * q[1, 0]

    pairs = [characteristic_roots(mu[k], sg[k], th[k]) for k in (0, 1)]
    neg = sorted(p.lambda_minus for p in pairs)     # two negative roots
    pos = sorted(p.lambda_plus for p in pairs)      # two positive roots

    def P(x):
        return _regime_poly(mu, sg, th, 0, x) * _regime_poly(mu, sg, th, 1, x) - rhs

    # expanded coefficients, for Newton polish and derivative
    A0, A1 = 0.5 * sg[0] ** 2, 0.5 * sg[1] ** 2
    c4 = A0 * A1
    c3 = A0 * mu[1] + A1 * mu[0]
    c2 = -A0 * th[1] - A1 * th[0] + mu[0] * mu[1]
    c1 = -mu[0] * th[1] - mu[1] * th[0]
    c0 = th[0] * th[1] - rhs
    poly = (c4, c3, c2, c1, c0)
    dpoly = (4 * c4, 3 * c3, 2 * c2, 1 * c1)

    def horner(cs, x):
        acc = 0.0
        for c in cs:
            acc = acc * x + c
        return acc

    def outer_bracket(x_inner, direction):
        step = 1.0 + abs(x_inner)
        x = x_inner + direction * step
        for _ in range(80):
            if P(x) > 0.0:
                return x
            step *= 2.0
            x = x_inner + direction * step
        raise RootIsolationFailure(
            f"no sign change beyond {x_inner} in direction {direction:+d}"
        )

    # P < 0 at all four single-regime roots, > 0 at 0 and far out
    brackets = [
        (outer_bracket(neg[0], -1), neg[0]),
        (neg[1], 0.0),
        (0.0, pos[0]),
        (pos[1], outer_bracket(pos[1], +1)),
    ]
    roots = []
    for lo, hi in brackets:
        plo, phi = P(lo), P(hi)
        if plo == 0.0:
            roots.append(lo)
            continue
        if phi == 0.0:
            roots.append(hi)
            continue
        if plo * phi > 0.0:
            raise RootIsolationFailure(
                f"bracket [{lo}, {hi}] does not change sign (P: {plo}, {phi})"
            )
        # bisection to ~1e-12 relative, then Newton polish
        a, b = lo, hi
        fa = plo
        for _ in range(200):
            m = 0.5 * (a + b)
            fm = P(m)
            if fm == 0.0 or (b - a) <= 1e-14 * (1.0 + abs(m)):
                a = b = m
                break
            if (fa < 0.0) == (fm < 0.0):
                a, fa = m, fm
            else:
                b = m
        x = 0.5 * (a + b)
        for _ in range(_polish_steps):
            d = horner(dpoly, x)
            if d == 0.0:
                break
            x -= horner(poly, x) / d
        roots.append(x)

    lam = tuple(sorted(float(r) for r in roots))
    if not (lam[0] < lam[1] < 0.0 < lam[2] < lam[3]):
        raise RootIsolationFailure(f"root sign pattern broken: {lam}")
    return QuarticRoots(lam=lam)


# ---------------------------------------------------------------------------
# Small dense linear algebra (hand-rolled, with refinement)
# ---------------------------------------------------------------------------

def _gauss_solve(a: np.ndarray, b: np.ndarray, refine: int = 2) -> np.ndarray:
    """Solve a small dense system by Gaussian elimination.

    Columns are equilibrated to unit max-norm, rows are partially
    pivoted, and the answer is polished with ``refine`` rounds of
    iterative refinement using compensated residual sums.  A pivot below
    1e-13 times the matrix scale raises SingularLinearSystem.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    col_scale = np.max(np.abs(a), axis=0)
    col_scale[col_scale == 0.0] = 1.0
    m = a / col_scale
    scale = np.max(np.abs(m))
    if not np.isfinite(scale) or scale == 0.0:
        raise SingularLinearSystem("matrix is zero or non-finite")

    def plain_solve(rhs):
        u = np.concatenate([m, rhs[:, None]], axis=1)
        piv_min, piv_max = math.inf, 0.0
        for k in range(n):
            p = k + int(np.argmax(np.abs(u[k:, k])))
            piv = abs(u[p, k])
            if piv < 1e-13 * scale:
                raise SingularLinearSystem(
                    f"pivot {piv:.3e} below threshold (scale {scale:.3e})"
                )
            piv_min = min(piv_min, piv)
            piv_max = max(piv_max, piv)
            if p != k:
                u[[k, p]] = u[[p, k]]
            u[k + 1:, k:] -= np.outer(u[k + 1:, k] / u[k, k], u[k, k:])
        x = np.zeros(n)
        for k in range(n - 1, -1, -1):
            x[k] = (u[k, n] - u[k, k + 1: n] @ x[k + 1:]) / u[k, k]
        logger.debug(
            "gauss solve n=%d pivot ratio %.3e", n,
            piv_max / piv_min if piv_min > 0 else math.inf,
        )
        return x

    x = plain_solve(b)
    for _ in range(refine):
        if not np.all(np.isfinite(x)):
            break
        with np.errstate(over="ignore", invalid="ignore"):
            prods = m * x
        if not np.all(np.isfinite(prods)):
            break
        r = np.array([math.fsum([b[i]] + list(-prods[i])) for i in range(n)])
        if not np.all(np.isfinite(r)):
            break
        x = x + plain_solve(r)
    return x / col_scale


def _quasi_newton(residual, x0, tol, max_iter=_MAX_ITER):
    """Damped quasi-Newton with forward-difference Jacobian.

    Returns (x, r, converged).  Steps that fail to shrink the residual
    2-norm are halved up to ``_MAX_BACKTRACK`` times; a fully stalled
    line search ends the attempt.
    """
    def safe_residual(v):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return residual(v)

    x = np.asarray(x0, dtype=float).copy()
    r = safe_residual(x)
    if not np.all(np.isfinite(r)):
        return x, r, False
    for _ in range(max_iter):
        if np.max(np.abs(r)) <= tol:
            return x, r, True
        n = x.size
        jac = np.empty((r.size, n))
        for j in range(n):
            h = 1e-6 * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += h
            rp = safe_residual(xp)
            if not np.all(np.isfinite(rp)):
                xp[j] = x[j] - h
                rp = safe_residual(xp)
                h = -h
                if not np.all(np.isfinite(rp)):
                    return x, r, False
            jac[:, j] = (rp - r) / h
        try:
            step = _gauss_solve(jac, -r, refine=0)
        except SingularLinearSystem:
            return x, r, False
        norm0 = float(np.linalg.norm(r))
        alpha = 1.0
        for _ in range(_MAX_BACKTRACK):
            xn = x + alpha * step
            rn = safe_residual(xn)
            if np.all(np.isfinite(rn)) and np.linalg.norm(rn) < norm0:
                x, r = xn, rn
                break
            alpha *= 0.5
        else:
            return x, r, bool(np.max(np.abs(r)) <= tol)
    return x, r, bool(np.max(np.abs(r)) <= tol)


# ---------------------------------------------------------------------------
# Piecewise representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Branch:
    """One analytic piece: sum of exponentials around x_ref plus an
    affine part, valid on [x_lo, x_hi)."""

    x_lo: float
    x_hi: float
    x_ref: float
    coeffs: tuple      # ((c, lam), ...): c * exp(lam * (x - x_ref))
    slope: float = 0.0
    intercept: float = 0.0

    def value(self, x: float) -> float:
        acc = self.slope * x + self.intercept
        for c, lam in self.coeffs:
            acc += c * math.exp(min(lam * (x - self.x_ref), _EXP_CLIP))
        return acc

    def derivative(self, x: float) -> float:
        acc = self.slope
        for c, lam in self.coeffs:
            acc += c * lam * math.exp(min(lam * (x - self.x_ref), _EXP_CLIP))
        return acc

    def second_derivative(self, x: float) -> float:
        acc = 0.0
        for c, lam in self.coeffs:
            acc += c * lam * lam * math.exp(min(lam * (x - self.x_ref), _EXP_CLIP))
        return acc

    def to_json(self) -> dict:
        return {
            "x_lo": self.x_lo,
            "x_hi": None if math.isinf(self.x_hi) else self.x_hi,
            "x_ref": self.x_ref,
            "terms": [{"coeff": c, "exponent": lam} for c, lam in self.coeffs],
            "slope": self.slope,
            "intercept": self.intercept,
        }


class PiecewiseValue:
    """Ordered branches forming one regime's value function on [0, inf)."""

    def __init__(self, branches):
        self.branches = tuple(branches)
        self._cuts = [br.x_lo for br in self.branches]

    def _find(self, x: float) -> Branch:
        if x < 0.0:
            raise OutOfRange(f"value functions live on x >= 0, got {x}")
        idx = bisect.bisect_right(self._cuts, x) - 1
        return self.branches[max(idx, 0)]

    def value(self, x: float) -> float:
        return self._find(x).value(x)

    def derivative(self, x: float) -> float:
        return self._find(x).derivative(x)

    def second_derivative(self, x: float) -> float:
        return self._find(x).second_derivative(x)

    def to_json(self) -> list:
        return [br.to_json() for br in self.branches]


def _exp_branch(x_lo, x_hi, lam, weights, anchor_refs):
    """Build a Branch from anchored coefficients.

    ``weights[j]`` multiplies exp(lam[j] * (x - anchor_refs[j])); the
    branch re-bases every term at its own left endpoint so that stored
    coefficients stay representable.
    """
    coeffs = []
    for w, l, ref in zip(weights, lam, anchor_refs):
        c = w * math.exp(min(l * (x_lo - ref), _EXP_CLIP))
        if c != 0.0:
            coeffs.append((float(c), float(l)))
    return Branch(x_lo=x_lo, x_hi=x_hi, x_ref=x_lo, coeffs=tuple(coeffs))


# ---------------------------------------------------------------------------
# Positive-drift case: plain two-barrier policy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PositiveCaseSolution:
    """Two-barrier optimum for a model with both drifts positive.

    ``coefficients`` are the anchored weights of the shared four-
    exponential expansion below the lower barrier (regime-0 component);
    ``low_regime`` records which regime's barrier is the smaller one.
    """

    barriers: tuple                 # (b0, b1) in regime order
    low_regime: int
    coefficients: tuple             # anchored weights, see `anchor_refs`
    anchor_refs: tuple
    roots: QuarticRoots
    inner_residual: float
    outer_residual: float
    pieces: tuple = field(repr=False)   # (PiecewiseValue V0, PiecewiseValue V1)
    model: RegimeModel = field(repr=False, default=None)

    def value(self, x, regime):
        return self.pieces[regime].value(x)

    def derivative(self, x, regime):
        return self.pieces[regime].derivative(x)

    def second_derivative(self, x, regime):
        return self.pieces[regime].second_derivative(x)

    def to_json(self) -> dict:
        return {
            "kind": "two_barrier",
            "roots": list(self.roots.lam),
            "barriers": list(self.barriers),
            "low_regime": self.low_regime,
            "coefficients": list(self.coefficients),
            "anchor_refs": list(self.anchor_refs),
            "inner_residual": self.inner_residual,
            "outer_residual": self.outer_residual,
            "branches": {
                "0": self.pieces[0].to_json(),
                "1": self.pieces[1].to_json(),
            },
        }


def _coupling_weights(mu, sg, th, q, lam):
    """Regime-1 components per unit regime-0 component at each root."""
    return np.array([_regime_poly(mu, sg, th, 0, l) for l in lam]) / q[0, 0]


def _inner_two_barrier(mu, sg, th, q, lam, w1, lo, b_lo):
    """Anchored 4x4 solve: V0(0)=0, V1(0)=0 and smooth fit of the
    low-barrier regime at its own barrier.

    Returns (anchored weights, anchor refs, inner residual).  Weight j is
    the coefficient of exp(lam_j (x - ref_j)) in V0, with ref_j = b_lo
    for positive roots and 0 otherwise.
    """
    refs = np.where(lam > 0.0, b_lo, 0.0)
    e0 = _exp(lam * (0.0 - refs))
    eb = _exp(lam * (b_lo - refs))
    w_lo = np.ones(4) if lo == 0 else w1
    rows = np.vstack([
        e0,
        w1 * e0,
        w_lo * lam * eb,
        w_lo * lam * lam * eb,
    ])
    h = np.array([0.0, 0.0, 1.0, 0.0])
    weights = _gauss_solve(rows, h)
    resid = float(np.max(np.abs(rows @ weights - h)))
    return weights, refs, resid


def _band(mu, sg, th, q, hi, v_lo_at_b, b_lo, b_hi):
    """Coefficients of the high-barrier regime on (b_lo, b_hi).

    There the other regime already pays dividends, so its value is the
    affine x - b_lo + v_lo_at_b and the remaining scalar ODE has an
    affine particular solution plus two exponentials pinned by smooth
    fit at b_hi.  Returns (g, lk, beta, gamma) with
    value(x) = g . exp(lk (x - b_hi)) + beta (x + gamma).
    """
    lo = 1 - hi
    qhl = q[hi, lo]
    beta = qhl / th[hi]
    gamma = mu[hi] / th[hi] + v_lo_at_b - b_lo
    pair = characteristic_roots(mu[hi], sg[hi], th[hi])
    lk = np.array([pair.lambda_minus, pair.lambda_plus])
    if lk[0] == lk[1]:
        raise SingularLinearSystem("degenerate exponent pair in dividend band")
    alpha = lk[1] / (lk[1] - lk[0])
    g = np.array([
        (1.0 - beta) * alpha / lk[0],
        (1.0 - beta) * (1.0 - alpha) / lk[1],
    ])
    return g, lk, beta, gamma


def _band_eval(g, lk, beta, gamma, b_hi, x, order):
    z = _exp(lk * (x - b_hi))
    if order == 0:
        return float(g @ z + beta * (x + gamma))
    if order == 1:
        return float((g * lk) @ z + beta)
    return float((g * lk * lk) @ z)


def _two_barrier_residual(mu, sg, th, q, lam, w1, lo, b_pair):
    """Pasting mismatch of the high-barrier regime at the lower barrier:
    (slope gap, curvature gap), each normalised by its term size."""
    b_lo, b_hi = b_pair
    try:
        weights, refs, _ = _inner_two_barrier(mu, sg, th, q, lam, w1, lo, b_lo)
    except SingularLinearSystem:
        return np.array([1e6, 1e6])
    hi = 1 - lo
    w_lo = np.ones(4) if lo == 0 else w1
    w_hi = np.ones(4) if hi == 0 else w1
    eb = _exp(lam * (b_lo - refs))
    v_lo_b = float((weights * w_lo) @ eb)
    try:
        g, lk, beta, gamma = _band(mu, sg, th, q, hi, v_lo_b, b_lo, b_hi)
    except SingularLinearSystem:
        return np.array([1e6, 1e6])
    s_mid = (weights * w_hi * lam) @ eb
    c_mid = (weights * w_hi * lam * lam) @ eb
    s_band = _band_eval(g, lk, beta, gamma, b_hi, b_lo, 1)
    c_band = _band_eval(g, lk, beta, gamma, b_hi, b_lo, 2)
    s_scale = max(1.0, float(np.sum(np.abs(weights * w_hi * lam) * eb)))
    c_scale = max(1.0, float(np.sum(np.abs(weights * w_hi * lam * lam) * eb)))
    return np.array([(s_mid - s_band) / s_scale, (c_mid - c_band) / c_scale])


def _jittered(rng, start, n):
    for _ in range(n):
        yield [s * float(rng.uniform(0.6, 1.6)) for s in start]


def _dominance_score(sol, xs):
    """Rank a candidate solution by its total value at shared probes.

    When the smooth-fit system has several roots the one belonging to the
    optimal policy dominates every other candidate pointwise, so the
    largest probe total identifies it.  Non-finite values disqualify a
    candidate outright and probes where the slope drops below the unit
    payout bound incur a penalty that outweighs any value difference.
    """
    total, penalty = 0.0, 0.0
    for regime in (0, 1):
        for x in xs:
            v = sol.value(x, regime)
            d = sol.derivative(x, regime)
            if not (math.isfinite(v) and math.isfinite(d)):
                return -math.inf
            total += v
            if d < 1.0 - 1e-7:
                penalty += 1.0
    return total - 1e6 * penalty


def _select_dominant(built):
    """Pick the value-dominant solution among assembled candidates."""
    if len(built) == 1:
        return built[0]
    top = max(max(sol.barriers) for sol in built)
    xs = [f * top for f in (0.25, 0.5, 0.75, 1.0, 1.25)]
    ranked = sorted(built, key=lambda sol: _dominance_score(sol, xs))
    logger.debug(
        "dominance selection over %d candidates: barriers %s",
        len(built), [sol.barriers for sol in built],
    )
    return ranked[-1]


def solve_positive(model: RegimeModel, tol: float = DEFAULT_TOL) -> PositiveCaseSolution:
    """Optimal two-barrier policy when both drifts are positive.

    The labeling with the regime-0 barrier lower is attempted first
    (both orderings occur in practice); for each labeling a damped
    quasi-Newton iteration runs on the two pasting residuals, starting
    from the per-regime single-regime barriers at killing rate theta_i
    and falling back to discount-rate anchors plus jittered restarts.
    """
    mu, sg, th, q = _two_state(model)
    if mu[0] <= 0.0 or mu[1] <= 0.0:
        raise ValueError(
            f"solve_positive requires both drifts > 0, got mu={tuple(mu)}"
        )
    roots = quartic_roots(model)
    lam = roots.as_array()
    w1 = _coupling_weights(mu, sg, th, q, lam)

    a_theta = [single_regime_barrier(mu[k], sg[k], th[k]) for k in (0, 1)]
    a_disc = [
        single_regime_barrier(mu[k], sg[k], model.discount[k]) for k in (0, 1)
    ]
    rng = np.random.default_rng(20260818)
    best_fail = (math.inf, None)
    candidates = []
    seen = set()

    for lo in (0, 1):
        hi = 1 - lo
        starts = [
            [a_theta[lo], a_theta[hi]],
            [a_disc[lo], a_disc[hi]],
            [0.5 * (a_theta[lo] + a_disc[lo]), 0.5 * (a_theta[hi] + a_disc[hi])],
        ]
        starts += list(_jittered(rng, starts[0], _N_JITTER))

        def residual(b_pair, _lo=lo):
            return _two_barrier_residual(mu, sg, th, q, lam, w1, _lo, b_pair)

        for x0 in starts:
            x, r, ok = _quasi_newton(residual, x0, tol)
            rnorm = float(np.max(np.abs(r)))
            if not ok:
                if rnorm < best_fail[0]:
                    best_fail = (rnorm, tuple(x))
                continue
            b_lo, b_hi = float(x[0]), float(x[1])
            if not (0.0 < b_lo <= b_hi):
                if rnorm < best_fail[0]:
                    best_fail = (rnorm, tuple(x))
                continue
            key = (lo, round(b_lo, 8), round(b_hi, 8))
            if key in seen:
                continue
            seen.add(key)
            candidates.append((lo, b_lo, b_hi, rnorm))

    built = []
    for lo, b_lo, b_hi, rnorm in candidates:
        try:
            built.append(_build_positive(
                model, mu, sg, th, q, roots, lam, w1, lo, b_lo, b_hi, rnorm
            ))
        except SingularLinearSystem:
            continue
    if not built:
        raise OrderingUnresolved(
            "no barrier labeling produced a consistent two-barrier solution "
            f"(best residual {best_fail[0]:.3e} at {best_fail[1]})"
        )
    return _select_dominant(built)


def _build_positive(model, mu, sg, th, q, roots, lam, w1, lo, b_lo, b_hi, rnorm):
    hi = 1 - lo
    weights, refs, inner_res = _inner_two_barrier(mu, sg, th, q, lam, w1, lo, b_lo)
    w_lo = np.ones(4) if lo == 0 else w1
    w_hi = np.ones(4) if hi == 0 else w1
    eb = _exp(lam * (b_lo - refs))
    v_lo_b = float((weights * w_lo) @ eb)
    g, lk, beta, gamma = _band(mu, sg, th, q, hi, v_lo_b, b_lo, b_hi)
    v_hi_bhi = _band_eval(g, lk, beta, gamma, b_hi, b_hi, 0)

    # regime with the lower barrier: 4-exp then linear
    lo_pieces = PiecewiseValue([
        _exp_branch(0.0, b_lo, lam, weights * w_lo, refs),
        Branch(b_lo, math.inf, b_lo, (), 1.0, v_lo_b - b_lo),
    ])
    # regime with the higher barrier: 4-exp, dividend band, then linear
    band_coeffs = tuple(
        (float(g[k] * math.exp(min(lk[k] * (b_lo - b_hi), _EXP_CLIP))), float(lk[k]))
        for k in (0, 1)
    )
    hi_pieces = PiecewiseValue([
        _exp_branch(0.0, b_lo, lam, weights * w_hi, refs),
        Branch(b_lo, b_hi, b_lo, band_coeffs, beta, beta * gamma),
        Branch(b_hi, math.inf, b_hi, (), 1.0, v_hi_bhi - b_hi),
    ])
    pieces = (lo_pieces, hi_pieces) if lo == 0 else (hi_pieces, lo_pieces)
    barriers = (b_lo, b_hi) if lo == 0 else (b_hi, b_lo)
    return PositiveCaseSolution(
        barriers=barriers,
        low_regime=lo,
        coefficients=tuple(float(v) for v in weights),
        anchor_refs=tuple(float(v) for v in refs),
        roots=roots,
        inner_residual=inner_res,
        outer_residual=rnorm,
        pieces=pieces,
        model=model,
    )


# ---------------------------------------------------------------------------
# Mixed-sign case: liquidation level plus two barriers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NegativeCaseSolution:
    """Liquidation-barrier optimum for drift signs (-, +).

    Regime 0 (negative drift) liquidates at or below ``liquidation`` and
    pays dividends above ``barriers[0]``; regime 1 pays above
    ``barriers[1]`` with barriers[1] < barriers[0].  The auxiliary
    constants mirror the closed-form construction: ``alpha``/``beta0``/
    ``gamma`` shape the regime-0 dividend band, ``beta1`` the regime-1
    branch below the liquidation level, ``delta``/``phi`` its exponential
    weights, and ``epsilon`` the band's two exponential coefficients.
    """

    liquidation: float
    barriers: tuple
    coefficients: tuple
    anchor_refs: tuple
    alpha: float
    beta0: float
    beta1: float
    gamma: float
    delta1: float
    delta2: float
    phi: float
    epsilon: tuple
    roots: QuarticRoots
    inner_residual: float
    outer_residual: float
    pieces: tuple = field(repr=False)
    model: RegimeModel = field(repr=False, default=None)

    def value(self, x, regime):
        return self.pieces[regime].value(x)

    def derivative(self, x, regime):
        return self.pieces[regime].derivative(x)

    def second_derivative(self, x, regime):
        return self.pieces[regime].second_derivative(x)

    def to_json(self) -> dict:
        return {
            "kind": "liquidation_barrier",
            "roots": list(self.roots.lam),
            "liquidation": self.liquidation,
            "barriers": list(self.barriers),
            "coefficients": list(self.coefficients),
            "anchor_refs": list(self.anchor_refs),
            "constants": {
                "alpha": self.alpha,
                "beta0": self.beta0,
                "beta1": self.beta1,
                "gamma": self.gamma,
                "delta1": self.delta1,
                "delta2": self.delta2,
                "phi": self.phi,
                "epsilon": list(self.epsilon),
            },
            "inner_residual": self.inner_residual,
            "outer_residual": self.outer_residual,
            "branches": {
                "0": self.pieces[0].to_json(),
                "1": self.pieces[1].to_json(),
            },
        }


def _inner_liquidation(mu, sg, th, q, lam, w1, d0, b1):
    """Anchored 4x4 solve for the shared expansion on (d0, b1):
    V0(d0) = d0, V0'(d0) = 1, V1'(b1) = 1, V1''(b1) = 0."""
    refs = np.where(lam > 0.0, b1, 0.0)
    ed = _exp(lam * (d0 - refs))
    eb = _exp(lam * (b1 - refs))
    rows = np.vstack([
        ed,
        lam * ed,
        w1 * lam * eb,
        w1 * lam * lam * eb,
    ])
    h = np.array([d0, 1.0, 1.0, 0.0])
    weights = _gauss_solve(rows, h)
    resid = float(np.max(np.abs(rows @ weights - h)))
    return weights, refs, resid


def _liquidation_residual(mu, sg, th, q, lam, w1, levels):
    """Smooth-fit residuals for (d0, b0, b1): regime-1 slope pasting at
    d0, and regime-0 slope/curvature pasting at b1 against its band."""
    d0, b0, b1 = levels
    try:
        weights, refs, _ = _inner_liquidation(mu, sg, th, q, lam, w1, d0, b1)
    except SingularLinearSystem:
        return np.array([1e6, 1e6, 1e6])
    ed = _exp(lam * (d0 - refs))
    eb = _exp(lam * (b1 - refs))

    # regime-1 branch on [0, d0]: affine particular + two exponentials,
    # pinned by value 0 at the origin and curvature pasting at d0
    beta1 = q[1, 0] / th[1]
    pair1 = characteristic_roots(mu[1], sg[1], th[1])
    l1 = np.array([pair1.lambda_minus, pair1.lambda_plus])
    e1 = _exp(l1 * d0)
    mid_c_d0 = float((weights * w1 * lam * lam) @ ed)
    try:
        ab = _gauss_solve(
            np.vstack([np.ones(2), l1 * l1 * e1]),
            np.array([-beta1 * mu[1] / th[1], mid_c_d0]),
        )
    except SingularLinearSystem:
        return np.array([1e6, 1e6, 1e6])
    low_s_d0 = float((ab * l1) @ e1 + beta1)
    mid_s_d0 = float((weights * w1 * lam) @ ed)
    eq_a = low_s_d0 - mid_s_d0
    a_scale = max(1.0, float(np.sum(np.abs(ab * l1) * e1) + beta1
                             + np.sum(np.abs(weights * w1 * lam) * ed)))

    # regime-0 band on (b1, b0): source is the paying regime-1 value
    v1_b1 = float((weights * w1) @ eb)
    try:
        g, lk, beta0, gamma = _band(mu, sg, th, q, 0, v1_b1, b1, b0)
    except SingularLinearSystem:
        return np.array([1e6, 1e6, 1e6])
    s_mid = float((weights * lam) @ eb)
    c_mid = float((weights * lam * lam) @ eb)
    s_band = _band_eval(g, lk, beta0, gamma, b0, b1, 1)
    c_band = _band_eval(g, lk, beta0, gamma, b0, b1, 2)
    s_scale = max(1.0, float(np.sum(np.abs(weights * lam) * eb)))
    c_scale = max(1.0, float(np.sum(np.abs(weights * lam * lam) * eb)))
    return np.array([
        eq_a / a_scale,
        (s_mid - s_band) / s_scale,
        (c_mid - c_band) / c_scale,
    ])


def _relabeled(model: RegimeModel) -> RegimeModel:
    q = np.asarray(model.generator, dtype=float)
    return RegimeModel(
        states=(model.states[1], model.states[0]),
        generator=np.array([[q[1, 1], q[1, 0]], [q[0, 1], q[0, 0]]]),
    )


def solve_negative(model: RegimeModel, tol: float = DEFAULT_TOL) -> NegativeCaseSolution:
    """Optimal liquidation-barrier policy for drift signs (-, +).

    Solves the three smooth-fit equations (slope pasting of the
    positive-drift regime at the liquidation level; slope and curvature
    pasting of the negative-drift regime at the lower barrier) with the
    anchored 4x4 system solved at every residual evaluation.  The
    assumed structure is 0 < d0 < b1 < b0; if the converged root
    violates it, OrderingUnresolved reports exactly which part failed —
    a root with d0 <= 0 means the model's optimum has no liquidation
    region at all (it is a plain two-barrier policy).
    """
    mu, sg, th, q = _two_state(model)
    if mu[0] > 0.0 > mu[1]:
        flipped = solve_negative(_relabeled(model), tol)
        return _flip_solution(flipped, model)
    if mu[0] >= 0.0 or mu[1] <= 0.0:
        if mu[0] <= 0.0 and mu[1] <= 0.0:
            raise LiquidateEverywhere(
                "both regimes have non-positive drift; immediate full payout "
                "is the only candidate policy considered here",
                solution={"value": "identity"},
            )
        raise ValueError(
            f"solve_negative requires drift signs (-, +), got mu={tuple(mu)}"
        )

    # quick diagnostic: if even the most optimistic stand-alone regime-1
    # value cannot make waiting profitable anywhere in regime 0, paying
    # out every reserve level immediately is optimal there
    a1_free = single_regime_barrier(mu[1], sg[1], model.discount[1])
    v1_gain = mu[1] / model.discount[1] - a1_free   # sup_x (V1(x) - x) bound
    if mu[0] + q[0, 1] * v1_gain <= 0.0:
        raise LiquidateEverywhere(
            "waiting is unprofitable at every reserve level in the "
            f"negative-drift regime (mu0={mu[0]}, best coupling gain "
            f"{q[0, 1] * v1_gain:.4g}); the firm should be liquidated "
            "immediately there",
            solution={"delta0": math.inf},
        )

    roots = quartic_roots(model)
    lam = roots.as_array()
    w1 = _coupling_weights(mu, sg, th, q, lam)

    def residual(levels):
        return _liquidation_residual(mu, sg, th, q, lam, w1, levels)

    a1_theta = single_regime_barrier(mu[1], sg[1], th[1])
    a1_disc = single_regime_barrier(mu[1], sg[1], model.discount[1])
    rng = np.random.default_rng(20260818)
    scales = sorted({a1_theta, 0.5 * (a1_theta + a1_disc), a1_disc})
    starts = []
    for s in scales:
        starts.append([0.05 * s, 1.2 * s, s])
        starts.append([0.3 * s, 1.05 * s, s])
    starts += list(_jittered(rng, starts[0], _N_JITTER))
    starts += list(_jittered(rng, [0.05 * scales[-1], 1.2 * scales[-1],
                                   scales[-1]], _N_JITTER))
    best_fail = (math.inf, None)
    proper, improper = [], []
    seen = set()
    for x0 in starts:
        x, r, ok = _quasi_newton(residual, x0, tol)
        rnorm = float(np.max(np.abs(r)))
        if not ok:
            if rnorm < best_fail[0]:
                best_fail = (rnorm, tuple(x))
            continue
        d0, b0, b1 = (float(v) for v in x)
        key = (round(d0, 8), round(b0, 8), round(b1, 8))
        if key in seen:
            continue
        seen.add(key)
        if 0.0 < d0 < b1 < b0:
            proper.append((d0, b0, b1, rnorm))
        else:
            improper.append((d0, b0, b1))

    built = []
    for d0, b0, b1, rnorm in proper:
        try:
            built.append(_build_negative(model, mu, sg, th, q, roots, lam,
                                         w1, d0, b0, b1, rnorm))
        except SingularLinearSystem:
            continue
    if built:
        return _select_dominant(built)

    for d0, b0, b1 in improper:
        if d0 <= 0.0:
            raise OrderingUnresolved(
                "the smooth-fit system converged but its root has "
                f"liquidation level d0 = {d0:.6f} <= 0: the assumed "
                "structure 0 < d0 < b1 < b0 fails because no liquidation "
                "region exists for this model — its optimum is a plain "
                f"two-barrier policy near (b0, b1) = ({b0:.6f}, {b1:.6f})"
            )
    for d0, b0, b1 in improper:
        if not b1 < b0:
            raise OrderingUnresolved(
                "the smooth-fit system converged but its root has "
                f"b1 = {b1:.6f} >= b0 = {b0:.6f}, violating the assumed "
                "barrier ordering b1 < b0"
            )
    if improper:
        d0, b0, b1 = improper[0]
        raise OrderingUnresolved(
            "the smooth-fit system converged but its root has "
            f"d0 = {d0:.6f} >= b1 = {b1:.6f}, violating the assumed "
            "structure d0 < b1"
        )
    raise NoConvergence(
        "the liquidation-barrier smooth-fit system did not converge from "
        f"any start (best residual {best_fail[0]:.3e} at {best_fail[1]})"
    )


def _flip_solution(sol: NegativeCaseSolution, model: RegimeModel):
    return NegativeCaseSolution(
        liquidation=sol.liquidation,
        barriers=(sol.barriers[1], sol.barriers[0]),
        coefficients=sol.coefficients,
        anchor_refs=sol.anchor_refs,
        alpha=sol.alpha,
        beta0=sol.beta0,
        beta1=sol.beta1,
        gamma=sol.gamma,
        delta1=sol.delta1,
        delta2=sol.delta2,
        phi=sol.phi,
        epsilon=sol.epsilon,
        roots=sol.roots,
        inner_residual=sol.inner_residual,
        outer_residual=sol.outer_residual,
        pieces=(sol.pieces[1], sol.pieces[0]),
        model=model,
    )


def _build_negative(model, mu, sg, th, q, roots, lam, w1, d0, b0, b1, rnorm):
    weights, refs, inner_res = _inner_liquidation(mu, sg, th, q, lam, w1, d0, b1)
    ed = _exp(lam * (d0 - refs))
    eb = _exp(lam * (b1 - refs))

    beta1 = q[1, 0] / th[1]
    pair1 = characteristic_roots(mu[1], sg[1], th[1])
    l1 = np.array([pair1.lambda_minus, pair1.lambda_plus])
    e1 = _exp(l1 * d0)
    mid_c_d0 = float((weights * w1 * lam * lam) @ ed)
    ab = _gauss_solve(
        np.vstack([np.ones(2), l1 * l1 * e1]),
        np.array([-beta1 * mu[1] / th[1], mid_c_d0]),
    )
    phi = float(l1[0] ** 2 * e1[0] - l1[1] ** 2 * e1[1])
    delta2 = float(ab[0] * phi)
    delta1 = float(-ab[1] * phi)

    v1_b1 = float((weights * w1) @ eb)
    g, lk, beta0, gamma = _band(mu, sg, th, q, 0, v1_b1, b1, b0)
    alpha = float(lk[1] / (lk[1] - lk[0]))
    v0_b0 = _band_eval(g, lk, beta0, gamma, b0, b0, 0)
    v0_b1 = _band_eval(g, lk, beta0, gamma, b0, b1, 0)

    band_coeffs = tuple(
        (float(g[k] * math.exp(min(lk[k] * (b1 - b0), _EXP_CLIP))), float(lk[k]))
        for k in (0, 1)
    )
    v0_pieces = PiecewiseValue([
        Branch(0.0, d0, 0.0, (), 1.0, 0.0),
        _exp_branch(d0, b1, lam, weights, refs),
        Branch(b1, b0, b1, band_coeffs, beta0, beta0 * gamma),
        Branch(b0, math.inf, b0, (), 1.0, v0_b0 - b0),
    ])
    low_coeffs = tuple((float(ab[k]), float(l1[k])) for k in (0, 1))
    v1_pieces = PiecewiseValue([
        Branch(0.0, d0, 0.0, low_coeffs, beta1, beta1 * mu[1] / th[1]),
        _exp_branch(d0, b1, lam, weights * w1, refs),
        Branch(b1, math.inf, b1, (), 1.0, v1_b1 - b1),
    ])
    return NegativeCaseSolution(
        liquidation=d0,
        barriers=(b0, b1),
        coefficients=tuple(float(v) for v in weights),
        anchor_refs=tuple(float(v) for v in refs),
        alpha=alpha,
        beta0=float(beta0),
        beta1=float(beta1),
        gamma=float(gamma),
        delta1=delta1,
        delta2=delta2,
        phi=phi,
        epsilon=tuple(float(c) for c, _ in band_coeffs),
        roots=roots,
        inner_residual=inner_res,
        outer_residual=rnorm,
        pieces=(v0_pieces, v1_pieces),
        model=model,
    )


# ---------------------------------------------------------------------------
# Liquidation diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LiquidationDiagnostic:
    """Per-regime critical levels below which waiting is locally
    unprofitable; math.inf marks 'liquidate at every reserve level'."""

    delta: tuple


def _value_callable(values):
    if callable(values):
        return values
    return values.value


def liquidation_levels(model: RegimeModel, values) -> LiquidationDiagnostic:
    """First reserve level where waiting turns locally profitable.

    For each regime i this scans
    Y_i(x) = mu_i - c_i x + sum_{j != i} q_ij (V_j(x) - x)
    on a grid and bisects the first sign change.  ``values`` is either a
    callable (x, regime) -> float or an object with such a ``value``
    method.  Y_i(0) = mu_i, so positive-drift regimes report 0 exactly;
    if Y_i stays non-positive and is decreasing at the cap (it is
    eventually affine with negative slope), the level is math.inf.
    """
    mu, sg, th, q = _two_state(model)
    vfun = _value_callable(values)

    caps = [1.0]
    for k in (0, 1):
        if mu[k] > 0.0:
            caps.append(3.0 * single_regime_barrier(mu[k], sg[k],
                                                    model.discount[k]))
    x_cap = max(caps)

    def Y(i, x):
        j = 1 - i
        return mu[i] - model.discount[i] * x + q[i, j] * (vfun(x, j) - x)

    out = []
    for i in (0, 1):
        if mu[i] > 0.0:
            out.append(0.0)
            continue
        cap = x_cap
        level = None
        for _ in range(4):
            xs = np.linspace(0.0, cap, 2001)
            ys = np.array([Y(i, x) for x in xs])
            pos = np.nonzero(ys > 0.0)[0]
            if pos.size:
                k = int(pos[0])
                if k == 0:
                    level = 0.0
                else:
                    lo, hi = xs[k - 1], xs[k]
                    flo = ys[k - 1]
                    for _ in range(80):
                        mid = 0.5 * (lo + hi)
                        fm = Y(i, mid)
                        if fm > 0.0:
                            hi = mid
                        else:
                            lo, flo = mid, fm
                        if hi - lo <= 1e-12 * (1.0 + hi):
                            break
                    level = 0.5 * (lo + hi)
                break
            if ys[-1] < ys[-2]:
                level = math.inf
                break
            cap *= 2.0
        if level is None:
            logger.warning("liquidation scan hit the cap still rising; "
                           "reporting the level as infinite")
            level = math.inf
        out.append(float(level))
    return LiquidationDiagnostic(delta=tuple(out))


def evaluate(solution, x, regime):
    """Value of a closed-form solution at (x, regime)."""
    return solution.value(x, regime)
