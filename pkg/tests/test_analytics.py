"""Single-regime closed forms against independent numerical baselines.

Reference constants were produced by ``tools/make_reference_values.py``:
the scale-function values by high-order ODE integration (DOP853 at
rtol=1e-12) and the barrier levels by root-finding the curvature of that
ODE solution — neither touches the closed forms under test.  The resolvent
density is additionally checked against a test-local Monte-Carlo occupation
estimate with no code shared with the library's simulator.
"""

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from divbarrier import (
    DriftHypothesisViolated,
    NonPositiveDrift,
    OutOfRange,
    apriori_bounds,
    characteristic_roots,
    resolvent_density,
    scale_function,
    single_regime_barrier,
    single_regime_solution,
    single_regime_value,
    validate,
)

# --- frozen outputs of tools/make_reference_values.py ----------------------
ODE_W_VALUE = 84.40795993872835  # W(0.5) for (0.06, 0.24, 2.04)
ODE_W_DERIV = 628.1914689504833
ODE_W_SECOND = 4670.164935346419
ODE_BARRIER_0 = 1.0132221406614952  # zero of W'' for (0.06, 0.24, 0.04)
ODE_BARRIER_1 = 1.111219772779287  # same for (0.08, 0.30, 0.05)
# ---------------------------------------------------------------------------

ODE_MATCH_RTOL = 1e-8  # closed form vs ODE integration
QUAD_RTOL = 1e-10  # characteristic-root residual, relative
FD_STEP = 1e-6  # finite-difference step for the C^1 checks

BASE_MODEL = {
    "states": [
        {"mu": 0.06, "sigma": 0.24, "discount": 0.04},
        {"mu": 0.08, "sigma": 0.30, "discount": 0.05},
    ],
    "generator": [[-2.0, 2.0], [3.0, -3.0]],
}


# --------------------------------------------------------------------------
# characteristic roots
# --------------------------------------------------------------------------


def test_roots_symmetric_case():
    r = characteristic_roots(0.0, np.sqrt(2.0), 1.0)
    assert r.lambda_minus == pytest.approx(-1.0, abs=1e-14)
    assert r.lambda_plus == pytest.approx(1.0, abs=1e-14)


def test_roots_zero_killing():
    r = characteristic_roots(1.0, np.sqrt(2.0), 0.0)
    assert r.lambda_minus == pytest.approx(-1.0, abs=1e-14)
    assert r.lambda_plus == 0.0


def test_roots_vieta_identities():
    mu, sigma, q = 0.06, 0.24, 2.04
    r = characteristic_roots(mu, sigma, q)
    s2 = sigma * sigma
    assert r.lambda_plus * r.lambda_minus == pytest.approx(-2.0 * q / s2, rel=QUAD_RTOL)
    assert r.lambda_plus + r.lambda_minus == pytest.approx(-2.0 * mu / s2, rel=QUAD_RTOL)


@settings(max_examples=200, deadline=None)
@given(
    mu=st.floats(-5.0, 5.0),
    sigma=st.floats(0.05, 3.0),
    q=st.floats(0.0, 10.0),
)
def test_roots_satisfy_quadratic(mu, sigma, q):
    # subnormal q underflows in 2q/sigma^2 before the solver ever runs
    assume(q == 0.0 or q >= 1e-12)
    r = characteristic_roots(mu, sigma, q)
    assert r.lambda_minus <= r.lambda_plus
    if q > 0:
        assert r.lambda_minus < 0.0 < r.lambda_plus
    scale = 0.5 * sigma * sigma * max(r.lambda_plus ** 2, r.lambda_minus ** 2) + abs(
        mu
    ) * max(abs(r.lambda_plus), abs(r.lambda_minus)) + q
    for lam in (r.lambda_minus, r.lambda_plus):
        residual = 0.5 * sigma * sigma * lam * lam + mu * lam - q
        assert abs(residual) <= QUAD_RTOL * max(scale, 1e-300)


# --------------------------------------------------------------------------
# scale function
# --------------------------------------------------------------------------


def test_scale_boundary_values():
    sv = scale_function(0.06, 0.24, 2.04, 0.0)
    assert sv.value == 0.0
    assert sv.derivative == pytest.approx(2.0 / 0.24 ** 2, rel=1e-14)


def test_scale_matches_ode_integration():
    sv = scale_function(0.06, 0.24, 2.04, 0.5)
    assert sv.value == pytest.approx(ODE_W_VALUE, rel=ODE_MATCH_RTOL)
    assert sv.derivative == pytest.approx(ODE_W_DERIV, rel=ODE_MATCH_RTOL)
    assert sv.second_derivative == pytest.approx(ODE_W_SECOND, rel=ODE_MATCH_RTOL)


def test_scale_small_x_no_cancellation():
    # For tiny x the difference of exponentials loses all precision if
    # evaluated naively; the implementation must stay on the Taylor ray
    # W(x) ~ (2/sigma^2) x.
    sv = scale_function(0.06, 0.24, 2.04, 1e-12)
    assert sv.value == pytest.approx(2.0 / 0.24 ** 2 * 1e-12, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    mu=st.floats(-2.0, 2.0),
    sigma=st.floats(0.1, 2.0),
    q=st.floats(0.01, 5.0),
    x=st.floats(0.0, 5.0),
)
def test_scale_solves_its_ode(mu, sigma, q, x):
    # skip parameter corners where W itself exceeds float range
    assume(characteristic_roots(mu, sigma, q).lambda_plus * x < 600.0)
    sv = scale_function(mu, sigma, q, x)
    residual = 0.5 * sigma * sigma * sv.second_derivative + mu * sv.derivative - q * sv.value
    scale = (
        0.5 * sigma * sigma * abs(sv.second_derivative)
        + abs(mu) * abs(sv.derivative)
        + q * abs(sv.value)
    )
    assert abs(residual) <= 1e-8 * max(scale, 1.0)


def test_scale_vectorized_matches_scalar():
    xs = np.array([0.0, 0.1, 0.5, 1.3])
    vec = scale_function(0.06, 0.24, 2.04, xs)
    for i, x in enumerate(xs):
        assert vec.value[i] == scale_function(0.06, 0.24, 2.04, x).value


# --------------------------------------------------------------------------
# optimal barrier and value
# --------------------------------------------------------------------------


def test_barrier_matches_ode_root():
    assert single_regime_barrier(0.06, 0.24, 0.04) == pytest.approx(
        ODE_BARRIER_0, rel=ODE_MATCH_RTOL
    )
    assert single_regime_barrier(0.08, 0.30, 0.05) == pytest.approx(
        ODE_BARRIER_1, rel=ODE_MATCH_RTOL
    )


def test_barrier_reference_levels():
    assert single_regime_barrier(0.06, 0.24, 0.04) == pytest.approx(1.013, abs=1e-3)
    assert single_regime_barrier(0.08, 0.30, 0.05) == pytest.approx(1.111, abs=1e-3)


def test_barrier_requires_positive_drift():
    with pytest.raises(NonPositiveDrift):
        single_regime_barrier(-0.06, 0.24, 0.04)
    with pytest.raises(NonPositiveDrift):
        single_regime_barrier(0.0, 0.24, 0.04)


@settings(max_examples=100, deadline=None)
@given(c=st.floats(0.01, 100.0))
def test_barrier_scale_invariance(c):
    # The barrier depends only on drift and discount per unit of squared
    # volatility: (mu, sigma^2, r) -> (c mu, c sigma^2, c r) leaves it fixed.
    base = single_regime_barrier(0.06, 0.24, 0.04)
    scaled = single_regime_barrier(
        c * 0.06, np.sqrt(c) * 0.24, c * 0.04
    )
    assert scaled == pytest.approx(base, rel=1e-10)


def test_value_boundary_and_barrier_level():
    a = single_regime_barrier(0.06, 0.24, 0.04)
    assert single_regime_value(0.06, 0.24, 0.04, 0.0) == 0.0
    assert single_regime_value(0.06, 0.24, 0.04, a) == pytest.approx(
        0.06 / 0.04, rel=1e-12
    )


def test_value_smooth_at_barrier():
    sol = single_regime_solution(0.06, 0.24, 0.04)
    a = sol.barrier
    left = (sol.value(a) - sol.value(a - FD_STEP)) / FD_STEP
    right = (sol.value(a + FD_STEP) - sol.value(a)) / FD_STEP
    assert left == pytest.approx(1.0, abs=1e-6)
    assert right == pytest.approx(1.0, abs=1e-6)
    assert sol.derivative(a) == pytest.approx(1.0, rel=1e-12)


def test_value_slope_and_concavity():
    sol = single_regime_solution(0.06, 0.24, 0.04)
    xs = np.arange(0.0, 2.0, 1e-3)
    v = sol.value(xs)
    slopes = np.diff(v) / 1e-3
    assert np.all(slopes >= 1.0 - 1e-9)
    inside = xs[1:-1] <= sol.barrier
    curv = (v[2:] - 2 * v[1:-1] + v[:-2]) / 1e-6
    assert np.all(curv[inside] <= 1e-6)


# --------------------------------------------------------------------------
# resolvent density
# --------------------------------------------------------------------------


def test_resolvent_domain_checks():
    with pytest.raises(OutOfRange):
        resolvent_density(0.06, 0.24, 2.04, 1.0, 1.5, 0.5)
    with pytest.raises(OutOfRange):
        resolvent_density(0.06, 0.24, 2.04, 1.0, 0.5, -0.1)


def test_resolvent_vanishes_at_zero_start():
    ys = np.linspace(0.0, 1.0, 11)
    assert np.all(resolvent_density(0.06, 0.24, 2.04, 1.0, 0.0, ys) == 0.0)


def test_resolvent_nonnegative_and_mass_bounded():
    xs = np.linspace(0.0, 1.0, 21)
    ys = np.linspace(0.0, 1.0, 2001)
    for x in xs:
        h = resolvent_density(0.06, 0.24, 2.04, 1.0, x, ys)
        assert np.all(h >= 0.0)
        # integral of q * h over y is the chance of never hitting 0 before
        # the exponential clock; always at most 1
        assert 2.04 * np.trapezoid(h, ys) <= 1.0 + 1e-9


def test_resolvent_matches_textbook_form_where_stable():
    # At moderate arguments the naive two-term expression is accurate
    # enough to cross-check the rearranged implementation.
    mu, sigma, q, b = 0.06, 0.24, 2.04, 1.0

    def naive(x, y):
        w = lambda z: scale_function(mu, sigma, q, z).value
        wp = lambda z: scale_function(mu, sigma, q, z).derivative
        out = w(x) * wp(b - y) / wp(b)
        if x >= y:
            out -= w(x - y)
        return out

    for x, y in [(0.5, 0.3), (0.3, 0.5), (0.9, 0.9), (0.2, 0.05), (1.0, 0.5)]:
        assert resolvent_density(mu, sigma, q, b, x, y) == pytest.approx(
            naive(x, y), rel=1e-9, abs=1e-12
        )


def test_resolvent_continuous_on_diagonal():
    h_lo = resolvent_density(0.06, 0.24, 2.04, 1.0, 0.5 - 1e-9, 0.5)
    h_hi = resolvent_density(0.06, 0.24, 2.04, 1.0, 0.5 + 1e-9, 0.5)
    assert h_lo == pytest.approx(h_hi, rel=1e-6)


def _occupation_reference(mu, sigma, q, b, x0, edges, n_paths, dt, seed):
    """Test-local occupation-time estimate for the reflected, killed diffusion.

    Straight Euler scheme in numpy, vectorized across paths: accumulate
    e^{-q t} dt into y-bins until the path hits 0 (trapezoid-free, first
    order).  Returns per-bin means and standard errors.
    """
    rng = np.random.default_rng(seed)
    pos = np.full(n_paths, float(x0))
    active = np.arange(n_paths)
    disc = 1.0
    n_bins = len(edges) - 1
    totals = np.zeros((n_paths, n_bins))
    sqdt = np.sqrt(dt)
    t, horizon = 0.0, 10.0 / q  # e^{-10} residual discount mass, negligible
    while t < horizon and active.size:
        cur = pos[active]
        idx = np.clip(np.searchsorted(edges, cur, side="right") - 1, 0, n_bins - 1)
        np.add.at(totals, (active, idx), disc * dt)
        nxt = np.minimum(cur + mu * dt + sigma * sqdt * rng.standard_normal(active.size), b)
        pos[active] = nxt
        active = active[nxt > 0.0]
        disc *= np.exp(-q * dt)
        t += dt
    mean = totals.mean(axis=0)
    stderr = totals.std(axis=0, ddof=1) / np.sqrt(n_paths)
    return mean, stderr


def test_resolvent_matches_occupation_simulation():
    mu, sigma, q, b, x0 = 0.06, 0.24, 2.04, 1.0, 0.5
    edges = np.linspace(0.0, b, 11)
    mean, stderr = _occupation_reference(
        mu, sigma, q, b, x0, edges, n_paths=25_000, dt=2.5e-4, seed=20260818
    )
    for k in range(len(edges) - 1):
        ys = np.linspace(edges[k], edges[k + 1], 101)
        target = np.trapezoid(resolvent_density(mu, sigma, q, b, x0, ys), ys)
        # 3-sigma agreement plus a small allowance for the O(sqrt(dt))
        # discretization bias of naive Euler ruin detection
        tol = 3.0 * stderr[k] + 2e-3
        assert abs(mean[k] - target) <= tol, (k, mean[k], target, stderr[k])


# --------------------------------------------------------------------------
# a-priori bounds
# --------------------------------------------------------------------------


def test_bounds_base_model_parameters():
    bp = apriori_bounds(validate(BASE_MODEL))
    assert bp.upper.mu == pytest.approx(0.06 / 0.0576, rel=1e-12)
    assert bp.upper.discount == pytest.approx(0.05 / 0.09, rel=1e-12)
    assert bp.lower.mu == pytest.approx(0.08 / 0.09, rel=1e-12)
    assert bp.lower.discount == pytest.approx(0.04 / 0.0576, rel=1e-12)
    assert bp.upper.sigma == 1.0 and bp.lower.sigma == 1.0
    # barriers recomputed from the ratio parameters
    assert bp.upper.barrier == pytest.approx(
        single_regime_barrier(0.06 / 0.0576, 1.0, 0.05 / 0.09), rel=1e-12
    )


def test_bounds_single_regime_degenerate():
    m = validate(
        {
            "states": [{"mu": 0.06, "sigma": 0.24, "discount": 0.04}],
            "generator": [[0.0]],
        }
    )
    bp = apriori_bounds(m)
    assert bp.lower.mu == bp.upper.mu
    assert bp.lower.discount == bp.upper.discount


def test_bounds_require_positive_drift():
    mixed = {
        "states": [
            {"mu": -0.08, "sigma": 0.40, "discount": 0.06},
            {"mu": 0.14, "sigma": 0.50, "discount": 0.08},
        ],
        "generator": [[-10.0, 10.0], [0.001, -0.001]],
    }
    with pytest.raises(DriftHypothesisViolated):
        apriori_bounds(validate(mixed))


def test_bounds_ordered_pointwise():
    bp = apriori_bounds(validate(BASE_MODEL))
    xs = np.linspace(0.0, 5.0, 1000)
    assert np.all(bp.lower.value(xs) <= bp.upper.value(xs) + 1e-12)
