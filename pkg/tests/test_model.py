"""Model validation, effective rates, drift-case routing, JSON round-trip."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divbarrier import (
    BadGeneratorRowSum,
    DimensionMismatch,
    DriftCase,
    ModelValidationError,
    NegativeOffDiagonal,
    NonPositiveDiscount,
    NonPositiveVolatility,
    drift_sign_case,
    dump_model,
    effective_rates,
    load_model,
    two_state_model,
    validate,
)

BASE_MODEL = {
    "states": [
        {"mu": 0.06, "sigma": 0.24, "discount": 0.04},
        {"mu": 0.08, "sigma": 0.30, "discount": 0.05},
    ],
    "generator": [[-2.0, 2.0], [3.0, -3.0]],
}

MIXED_MODEL = {
    "states": [
        {"mu": -0.08, "sigma": 0.40, "discount": 0.06},
        {"mu": 0.14, "sigma": 0.50, "discount": 0.08},
    ],
    "generator": [[-10.0, 10.0], [0.001, -0.001]],
}


def test_single_state_zero_generator_is_valid():
    m = validate(
        {
            "states": [{"mu": 0.06, "sigma": 0.24, "discount": 0.04}],
            "generator": [[0.0]],
        }
    )
    assert m.n_states == 1
    assert m.generator[0, 0] == 0.0


def test_two_state_base_model_is_valid():
    m = validate(BASE_MODEL)
    assert m.n_states == 2
    assert m.states[0].mu == 0.06
    assert np.array_equal(m.generator, [[-2.0, 2.0], [3.0, -3.0]])


def test_zero_volatility_rejected():
    bad = {
        "states": [{"mu": 0.06, "sigma": 0.0, "discount": 0.04}],
        "generator": [[0.0]],
    }
    with pytest.raises(NonPositiveVolatility):
        validate(bad)


def test_zero_discount_rejected():
    bad = {
        "states": [{"mu": 0.06, "sigma": 0.24, "discount": 0.0}],
        "generator": [[0.0]],
    }
    with pytest.raises(NonPositiveDiscount):
        validate(bad)


def test_bad_row_sum_rejected():
    bad = dict(BASE_MODEL, generator=[[-2.0, 2.5], [3.0, -3.0]])
    with pytest.raises(BadGeneratorRowSum):
        validate(bad)


def test_negative_off_diagonal_rejected():
    bad = dict(BASE_MODEL, generator=[[2.0, -2.0], [-3.0, 3.0]])
    with pytest.raises(NegativeOffDiagonal):
        validate(bad)


def test_generator_shape_mismatch_rejected():
    bad = dict(BASE_MODEL, generator=[[0.0]])
    with pytest.raises(DimensionMismatch):
        validate(bad)


def test_non_numeric_entry_rejected():
    bad = {
        "states": [{"mu": "fast", "sigma": 0.24, "discount": 0.04}],
        "generator": [[0.0]],
    }
    with pytest.raises(ModelValidationError):
        validate(bad)


def test_row_sums_renormalized_exactly():
    # Row sums within the 1e-12 tolerance are re-normalized so that the
    # diagonal is exactly minus the off-diagonal sum.
    tweaked = dict(
        BASE_MODEL, generator=[[-2.0 + 3e-13, 2.0], [3.0, -3.0 - 3e-13]]
    )
    m = validate(tweaked)
    assert m.generator[0, 0] == -2.0
    assert m.generator[1, 1] == -3.0
    assert np.all(m.generator.sum(axis=1) == 0.0)


def test_generator_is_read_only():
    m = validate(BASE_MODEL)
    with pytest.raises(ValueError):
        m.generator[0, 0] = 5.0


def test_effective_rates_base_model():
    rates = effective_rates(validate(BASE_MODEL))
    assert rates[0].theta == pytest.approx(2.04, abs=1e-15)
    assert rates[1].theta == pytest.approx(3.05, abs=1e-15)


def test_effective_rate_no_switching_equals_discount():
    m = validate(
        {
            "states": [{"mu": 0.06, "sigma": 0.24, "discount": 0.04}],
            "generator": [[0.0]],
        }
    )
    assert effective_rates(m)[0].theta == 0.04


def test_drift_sign_cases():
    assert drift_sign_case(validate(BASE_MODEL)) is DriftCase.ALL_POSITIVE
    assert drift_sign_case(validate(MIXED_MODEL)) is DriftCase.MIXED_SIGN
    m = two_state_model(-1.0, 0.3, -1.0, 0.05, -1.0, 0.3, -1.0, 0.05)
    assert drift_sign_case(m) is DriftCase.ALL_NONPOSITIVE


def test_serialization_round_trip_idempotent():
    m1 = validate(BASE_MODEL)
    m2 = validate(m1.to_dict())
    assert m1.to_dict() == m2.to_dict()
    assert validate(m2) is m2  # validated models pass through


def test_json_file_round_trip(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(BASE_MODEL))
    m = load_model(path)
    out = tmp_path / "copy.json"
    dump_model(m, out)
    assert load_model(out).to_dict() == m.to_dict()


@st.composite
def random_models(draw, n_max=4):
    n = draw(st.integers(1, n_max))
    states = [
        {
            "mu": draw(st.floats(-1.0, 1.0)),
            "sigma": draw(st.floats(0.05, 2.0)),
            "discount": draw(st.floats(0.001, 0.5)),
        }
        for _ in range(n)
    ]
    gen = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                gen[i, j] = draw(st.floats(0.0, 5.0))
        gen[i, i] = -gen[i].sum()
    return {"states": states, "generator": gen.tolist()}


@settings(max_examples=100, deadline=None)
@given(random_models())
def test_valid_models_have_positive_effective_rates(raw):
    m = validate(raw)
    for rate, state in zip(effective_rates(m), m.states):
        assert rate.theta > 0.0
        assert rate.theta >= state.discount
