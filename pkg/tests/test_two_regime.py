"""Closed-form two-regime solvers against independent oracles.

The quartic root finder is checked against a companion-matrix eigenvalue
solve built inside this file (numpy's eigensolver, no code shared with the
bracketed-bisection implementation) and, for symmetric models, against the
exact factorization into two single-regime quadratics.  Solver outputs are
held to structural identities that a correct solution must satisfy exactly
(value zero at the origin, smooth fit at the barriers, concavity where it
is guaranteed, identity payout below the liquidation level) and to frozen
regression pins that were cross-validated against the grid-based iterative
solver — an independent discretization of the same control problem — and
against the Monte-Carlo batch in ``tools/run_mc_batch.py``.
"""

import math

import numpy as np
import pytest

from divbarrier import (
    BarrierPolicy,
    GridFunction,
    LiquidateEverywhere,
    NegativeCaseSolution,
    OrderingUnresolved,
    OutOfRange,
    PositiveCaseSolution,
    QuarticRoots,
    barrier_value,
    characteristic_roots,
    evaluate,
    liquidation_levels,
    quartic_roots,
    solve_negative,
    solve_positive,
)
from divbarrier.model import two_state_model

BASE_MODEL = two_state_model(0.06, 0.24, -2.0, 0.04, 0.08, 0.30, -3.0, 0.05)

# Mixed-sign model whose optimum turns out to be a plain two-barrier
# policy (the liquidation-structure root has d0 < 0, so the solver must
# refuse rather than return a malformed solution).
NO_LIQUIDATION_MODEL = two_state_model(-0.08, 0.40, -10.0, 0.06,
                                       0.14, 0.50, -0.001, 0.08)
# Optimal pure-barrier levels for that model, found by a dense policy
# search over (b0, b1) with the grid solver and polished by bisection on
# the value gradient; used here only to build value functions for the
# liquidation-level diagnostic.
NO_LIQUIDATION_BARRIERS = (1.34043616, 1.33661297)

# Mixed-sign model with a genuine liquidation region.
LIQUIDATION_MODEL = two_state_model(-0.08, 0.40, -1.5, 0.06,
                                    0.40, 0.50, -4.0, 0.15)

# --- frozen regression pins ------------------------------------------------
# Barriers cross-validated against the iterative grid solver (agreement to
# 2e-6 at h=1e-3) and value probes against 1e6-path simulation; quartic
# roots against the companion-matrix oracle below.
BASE_ROOTS = (-12.728238457476543, -2.4381676248332234,
              0.5113718152483442, 10.793923155950301)
NO_LIQ_ROOTS = (-10.725407258281274, -1.5364186552567254,
                0.41655673335789634, 11.725269180180101)
BASE_BARRIERS = (1.0499316603717226, 1.0699450389263276)
HIGH_DRIFT_BARRIERS = (0.9955468307526079, 1.1305111045269098)
LIQ_LEVELS = (0.03356405707409357, 0.5577658112661433, 0.5555186584012981)
LIQ_PROBES = [
    (0.15, 0, 0.15254857450298542),
    (0.15, 1, 0.21190778047770176),
    (0.30, 0, 0.3067993100885009),
    (0.45, 0, 0.4585502403430783),
    (0.45, 1, 0.5344356459207791),
]


def _theta(model, k):
    return model.discount[k] - model.generator[k][k]


def companion_roots(model):
    """Independent quartic oracle: eigenvalues of the companion matrix.

    The quartic is the resultant of the two regime quadratics minus the
    switching product, assembled with numpy polynomial arithmetic; its
    roots come from the eigensolver, sharing nothing with the bracketed
    bisection in the library.
    """
    mu = [s.mu for s in model.states]
    sg = [s.sigma for s in model.states]
    th = [_theta(model, k) for k in (0, 1)]
    p0 = np.array([0.5 * sg[0] ** 2, mu[0], -th[0]])
    p1 = np.array([0.5 * sg[1] ** 2, mu[1], -th[1]])
    prod = np.polymul(p0, p1)
    prod[-1] -= model.generator[0][0] * model.generator[1][1]
    monic = prod / prod[0]
    comp = np.zeros((4, 4))
    comp[0, :] = -monic[1:]
    comp[1, 0] = comp[2, 1] = comp[3, 2] = 1.0
    ev = np.linalg.eigvals(comp)
    assert np.max(np.abs(ev.imag)) < 1e-10
    return np.sort(ev.real)


# ---------------------------------------------------------------------------
# quartic_roots
# ---------------------------------------------------------------------------

class TestQuarticRoots:
    @pytest.mark.parametrize("model", [BASE_MODEL, NO_LIQUIDATION_MODEL,
                                       LIQUIDATION_MODEL],
                             ids=["base", "no-liquidation", "liquidation"])
    def test_matches_companion_matrix_oracle(self, model):
        lam = quartic_roots(model).as_array()
        oracle = companion_roots(model)
        assert np.max(np.abs(lam - oracle) / np.abs(oracle)) < 1e-9

    def test_frozen_values(self):
        lam = quartic_roots(BASE_MODEL).as_array()
        np.testing.assert_allclose(lam, BASE_ROOTS, rtol=1e-12)
        lam = quartic_roots(NO_LIQUIDATION_MODEL).as_array()
        np.testing.assert_allclose(lam, NO_LIQ_ROOTS, rtol=1e-12)

    def test_result_contract(self):
        roots = quartic_roots(BASE_MODEL)
        assert isinstance(roots, QuarticRoots)
        assert isinstance(roots.lam, tuple) and len(roots.lam) == 4
        np.testing.assert_array_equal(roots.as_array(), roots.lam)
        l1, l2, l3, l4 = roots.lam
        assert l1 < l2 < 0.0 < l3 < l4

    def test_symmetric_model_factorizes(self):
        # identical regimes: the quartic splits into the two quadratics
        # obtained by shifting the killing rate by -/+ the switching rate
        mu, sg, r, q = 0.07, 0.30, 0.05, 2.0
        model = two_state_model(mu, sg, -q, r, mu, sg, -q, r)
        lam = quartic_roots(model).as_array()
        theta = r + q
        inner = characteristic_roots(mu, sg, theta - q)
        outer = characteristic_roots(mu, sg, theta + q)
        expected = np.sort([inner.lambda_minus, inner.lambda_plus,
                            outer.lambda_minus, outer.lambda_plus])
        np.testing.assert_allclose(lam, expected, rtol=0, atol=1e-10)

    def test_random_models_sign_product_interlacing(self):
        # three exact structural properties on a large random family:
        # the sign pattern of the four roots, the defining product
        # identity F0(lam)F1(lam) = q00*q11, and strict interlacing with
        # each regime's own quadratic roots
        rng = np.random.default_rng(6021)
        for _ in range(1000):
            mu = rng.uniform(-0.5, 0.6, 2)
            sg = rng.uniform(0.1, 0.6, 2)
            qd = -rng.uniform(0.1, 5.0, 2)
            r = rng.uniform(0.01, 0.1, 2)
            model = two_state_model(mu[0], sg[0], qd[0], r[0],
                                    mu[1], sg[1], qd[1], r[1])
            lam = quartic_roots(model).as_array()
            assert lam[0] < lam[1] < 0.0 < lam[2] < lam[3]
            qprod = qd[0] * qd[1]
            for value in lam:
                f0 = 0.5 * sg[0] ** 2 * value ** 2 + mu[0] * value - (r[0] - qd[0])
                f1 = 0.5 * sg[1] ** 2 * value ** 2 + mu[1] * value - (r[1] - qd[1])
                assert abs(f0 * f1 - qprod) <= 1e-8 * abs(qprod)
            for k in (0, 1):
                pair = characteristic_roots(mu[k], sg[k], r[k] - qd[k])
                assert lam[0] < pair.lambda_minus < lam[1]
                assert lam[2] < pair.lambda_plus < lam[3]


# ---------------------------------------------------------------------------
# solve_positive
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def positive_solution():
    return solve_positive(BASE_MODEL)


class TestSolvePositive:
    def test_base_barriers(self, positive_solution):
        b0, b1 = positive_solution.barriers
        assert b0 == pytest.approx(1.050, abs=2e-3)
        assert b1 == pytest.approx(1.070, abs=2e-3)
        assert positive_solution.low_regime == 0
        np.testing.assert_allclose(positive_solution.barriers,
                                   BASE_BARRIERS, rtol=0, atol=1e-9)

    def test_volatility_variant_barriers(self):
        sol = solve_positive(two_state_model(0.06, 0.16, -2.0, 0.04,
                                             0.08, 0.30, -3.0, 0.05))
        assert sol.barriers[0] == pytest.approx(0.919, abs=5e-3)
        assert sol.barriers[1] == pytest.approx(0.999, abs=5e-3)

    def test_discount_variant_flips_barrier_order(self):
        # a patient regime 0 waits longer, pushing its barrier above the
        # other regime's
        sol = solve_positive(two_state_model(0.06, 0.24, -2.0, 0.02,
                                             0.08, 0.30, -3.0, 0.05))
        assert sol.barriers[0] == pytest.approx(1.335, abs=5e-3)
        assert sol.barriers[1] == pytest.approx(1.300, abs=5e-3)
        assert sol.low_regime == 1
        assert sol.barriers[1] < sol.barriers[0]

    def test_high_drift_variant(self):
        sol = solve_positive(two_state_model(1.00, 0.24, -2.0, 0.04,
                                             0.08, 0.30, -3.0, 0.05))
        np.testing.assert_allclose(sol.barriers, HIGH_DRIFT_BARRIERS,
                                   rtol=0, atol=1e-9)

    def test_residuals_are_tiny(self, positive_solution):
        assert positive_solution.inner_residual <= 1e-9
        assert positive_solution.outer_residual <= 1e-9

    def test_value_zero_at_origin(self, positive_solution):
        for i in (0, 1):
            assert abs(positive_solution.value(0.0, i)) < 1e-12

    def test_smooth_fit_at_barriers(self, positive_solution):
        # slope 1 and vanishing curvature from the left at each regime's
        # own barrier
        for i in (0, 1):
            b = positive_solution.barriers[i]
            assert positive_solution.derivative(b - 1e-12, i) == \
                pytest.approx(1.0, abs=1e-9)
            assert abs(positive_solution.second_derivative(b - 1e-12, i)) < 1e-8

    def test_concave_with_slope_at_least_one(self, positive_solution):
        xs = np.linspace(1e-9, max(positive_solution.barriers), 2001)
        for i in (0, 1):
            d1 = np.array([positive_solution.derivative(x, i) for x in xs])
            d2 = np.array([positive_solution.second_derivative(x, i)
                           for x in xs])
            assert d1.min() >= 1.0 - 1e-12
            assert d2.max() <= 1e-12

    def test_linear_extension_above_barrier(self, positive_solution):
        for i in (0, 1):
            b = positive_solution.barriers[i]
            vb = positive_solution.value(b, i)
            for dx in (0.0, 0.3, 1.7):
                x = max(positive_solution.barriers) + dx
                assert positive_solution.value(x, i) == \
                    pytest.approx(vb + (x - b), abs=1e-12)
                assert positive_solution.derivative(x, i) == 1.0

    def test_requires_positive_drifts(self):
        with pytest.raises(ValueError, match="both drifts"):
            solve_positive(LIQUIDATION_MODEL)

    def test_rejects_negative_reserves(self, positive_solution):
        with pytest.raises(OutOfRange):
            positive_solution.value(-0.1, 0)

    def test_json_export(self, positive_solution):
        js = positive_solution.to_json()
        assert js["kind"] == "two_barrier"
        assert js["low_regime"] == 0
        np.testing.assert_allclose(js["barriers"],
                                   positive_solution.barriers)
        np.testing.assert_allclose(js["roots"],
                                   positive_solution.roots.lam)
        assert set(js["branches"]) == {"0", "1"}
        for i in (0, 1):
            for br in js["branches"][str(i)]:
                assert {"x_lo", "x_hi", "x_ref", "terms",
                        "slope", "intercept"} <= set(br)
                for term in br["terms"]:
                    assert set(term) == {"coeff", "exponent"}
        # the export reproduces the value function exactly
        for x, i in [(0.3, 0), (0.9, 1), (1.2, 0), (2.5, 1)]:
            assert _json_value(js, x, i) == \
                pytest.approx(positive_solution.value(x, i), abs=1e-10)


def _json_value(js, x, i):
    for br in js["branches"][str(i)]:
        hi = math.inf if br["x_hi"] is None else br["x_hi"]
        if br["x_lo"] <= x < hi:
            acc = br["slope"] * x + br["intercept"]
            for term in br["terms"]:
                acc += term["coeff"] * math.exp(
                    term["exponent"] * (x - br["x_ref"]))
            return acc
    raise AssertionError(f"no branch covers x={x} in regime {i}")


# ---------------------------------------------------------------------------
# solve_negative
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def negative_solution():
    return solve_negative(LIQUIDATION_MODEL)


class TestSolveNegative:
    def test_levels_and_ordering(self, negative_solution):
        d0 = negative_solution.liquidation
        b0, b1 = negative_solution.barriers
        assert 0.0 < d0 < b1 < b0
        np.testing.assert_allclose([d0, b0, b1], LIQ_LEVELS,
                                   rtol=0, atol=1e-9)

    def test_residuals_are_tiny(self, negative_solution):
        assert negative_solution.inner_residual <= 1e-9
        assert negative_solution.outer_residual <= 1e-9

    def test_frozen_value_probes(self, negative_solution):
        for x, i, expected in LIQ_PROBES:
            assert negative_solution.value(x, i) == \
                pytest.approx(expected, abs=1e-9)

    def test_identity_payout_below_liquidation_level(self, negative_solution):
        d0 = negative_solution.liquidation
        for x in np.linspace(0.0, d0, 7):
            assert negative_solution.value(x, 0) == pytest.approx(x, abs=1e-12)
            assert negative_solution.derivative(x, 0) == \
                pytest.approx(1.0, abs=1e-12)

    def test_smooth_fit(self, negative_solution):
        d0 = negative_solution.liquidation
        b0, b1 = negative_solution.barriers
        assert negative_solution.derivative(d0 + 1e-12, 0) == \
            pytest.approx(1.0, abs=1e-9)
        for i, b in ((0, b0), (1, b1)):
            assert negative_solution.derivative(b - 1e-12, i) == \
                pytest.approx(1.0, abs=1e-9)
            assert abs(negative_solution.second_derivative(b - 1e-12, i)) < 1e-8

    def test_branches_join_continuously(self, negative_solution):
        # value and slope agree across every interior breakpoint
        for i in (0, 1):
            pieces = negative_solution.pieces[i]
            for right in pieces.branches[1:]:
                x = right.x_lo
                left = pieces._find(x - 1e-13)
                assert left.value(x) == pytest.approx(right.value(x), abs=1e-8)
                assert left.derivative(x) == \
                    pytest.approx(right.derivative(x), abs=1e-8)

    def test_low_regime_value_is_not_concave(self, negative_solution):
        # between the liquidation level and the first barrier the slope
        # rises above 1 again, so the value function is convex there
        d0 = negative_solution.liquidation
        b1 = negative_solution.barriers[1]
        xs = np.linspace(d0 + 1e-9, b1, 1501)
        d1 = np.array([negative_solution.derivative(x, 0) for x in xs])
        d2 = np.array([negative_solution.second_derivative(x, 0) for x in xs])
        assert d2.max() > 1e-4
        assert d1.max() > 1.0 + 1e-3

    def test_two_disjoint_unit_slope_intervals(self, negative_solution):
        d0 = negative_solution.liquidation
        b0 = negative_solution.barriers[0]
        assert d0 < b0
        for x in np.linspace(0.0, d0, 5):
            assert negative_solution.derivative(x, 0) == \
                pytest.approx(1.0, abs=1e-12)
        for x in np.linspace(b0, b0 + 1.0, 5):
            assert negative_solution.derivative(x, 0) == \
                pytest.approx(1.0, abs=1e-12)

    def test_relabeled_model_gives_swapped_solution(self, negative_solution):
        flipped = solve_negative(two_state_model(0.40, 0.50, -4.0, 0.15,
                                                 -0.08, 0.40, -1.5, 0.06))
        assert flipped.liquidation == \
            pytest.approx(negative_solution.liquidation, abs=1e-12)
        assert flipped.barriers[0] == \
            pytest.approx(negative_solution.barriers[1], abs=1e-12)
        assert flipped.barriers[1] == \
            pytest.approx(negative_solution.barriers[0], abs=1e-12)
        for x in (0.1, 0.3, 0.6):
            assert flipped.value(x, 0) == \
                pytest.approx(negative_solution.value(x, 1), abs=1e-12)
            assert flipped.value(x, 1) == \
                pytest.approx(negative_solution.value(x, 0), abs=1e-12)

    def test_refuses_model_without_liquidation_region(self):
        with pytest.raises(OrderingUnresolved, match="no liquidation region"):
            solve_negative(NO_LIQUIDATION_MODEL)

    def test_deeply_negative_drift_liquidates_everywhere(self):
        model = two_state_model(-10.0, 0.40, -1.5, 0.06,
                                0.40, 0.50, -4.0, 0.15)
        with pytest.raises(LiquidateEverywhere, match="unprofitable at every"):
            solve_negative(model)

    def test_both_drifts_negative_liquidates_everywhere(self):
        model = two_state_model(-0.1, 0.3, -1.0, 0.05,
                                -0.2, 0.4, -2.0, 0.06)
        with pytest.raises(LiquidateEverywhere, match="both regimes"):
            solve_negative(model)

    def test_requires_mixed_drift_signs(self):
        with pytest.raises(ValueError, match="drift signs"):
            solve_negative(BASE_MODEL)

    def test_json_export(self, negative_solution):
        js = negative_solution.to_json()
        assert js["kind"] == "liquidation_barrier"
        assert js["liquidation"] == negative_solution.liquidation
        np.testing.assert_allclose(js["barriers"],
                                   negative_solution.barriers)
        assert {"alpha", "beta0", "beta1", "gamma", "delta1", "delta2",
                "phi", "epsilon"} <= set(js["constants"])
        assert set(js["branches"]) == {"0", "1"}
        for x, i in [(0.02, 0), (0.02, 1), (0.2, 0),
                     (0.556, 0), (0.8, 1)]:
            assert _json_value(js, x, i) == \
                pytest.approx(negative_solution.value(x, i), abs=1e-10)


# ---------------------------------------------------------------------------
# liquidation_levels, evaluate
# ---------------------------------------------------------------------------

class TestLiquidationLevels:
    def test_zero_for_positive_drift(self, positive_solution):
        diag = liquidation_levels(BASE_MODEL, positive_solution)
        assert diag.delta == (0.0, 0.0)

    def test_positive_and_finite_for_negative_drift(self, negative_solution):
        diag = liquidation_levels(LIQUIDATION_MODEL, negative_solution)
        assert diag.delta[1] == 0.0
        assert 0.0 < diag.delta[0] < math.inf
        assert diag.delta[0] == pytest.approx(0.13630723664071626, abs=1e-9)

    def test_finite_for_pure_barrier_optimum(self):
        # the no-liquidation model still has a finite critical level:
        # continuing is locally profitable above a small reserve, the
        # optimum simply never liquidates.  Value functions for the
        # diagnostic come from the grid solver at the frozen optimal
        # pure-barrier policy.
        h = 1e-3
        n = int(round(3.0 / h)) + 1
        start = GridFunction(h=h, samples=np.zeros((2, n)),
                             barriers=np.full(2, (n - 1) * h))
        values = barrier_value(BarrierPolicy(barriers=NO_LIQUIDATION_BARRIERS),
                               NO_LIQUIDATION_MODEL, tol=1e-9, start=start)
        diag = liquidation_levels(NO_LIQUIDATION_MODEL, values)
        assert diag.delta[1] == 0.0
        assert 0.0 < diag.delta[0] < math.inf
        assert diag.delta[0] == pytest.approx(0.0072790, abs=1e-4)

    def test_infinite_marker_when_waiting_never_pays(self):
        model = two_state_model(-10.0, 0.40, -1.5, 0.06,
                                0.40, 0.50, -4.0, 0.15)
        diag = liquidation_levels(model, lambda x, j: x)
        assert diag.delta == (math.inf, 0.0)

    def test_accepts_callable_and_solution_objects(self, positive_solution):
        via_obj = liquidation_levels(BASE_MODEL, positive_solution)
        via_fn = liquidation_levels(BASE_MODEL, positive_solution.value)
        assert via_obj.delta == via_fn.delta


class TestEvaluate:
    def test_delegates_to_solution(self, positive_solution, negative_solution):
        assert evaluate(positive_solution, 0.7, 1) == \
            positive_solution.value(0.7, 1)
        assert evaluate(negative_solution, 0.2, 0) == \
            negative_solution.value(0.2, 0)

    def test_solution_types(self, positive_solution, negative_solution):
        assert isinstance(positive_solution, PositiveCaseSolution)
        assert isinstance(negative_solution, NegativeCaseSolution)
