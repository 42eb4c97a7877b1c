import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from naaloss.exceptions import NonFiniteError
from naaloss.optim import AdamState, adam_init, adam_step


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e6, 1e6).filter(lambda g: abs(g) > 1e-3), st.floats(1e-5, 1e-1))
def test_first_step_magnitude_is_lr(g, lr):
    params = [np.array([1.5])]
    state = adam_init(params, lr=lr)
    new, state = adam_step(params, [np.array([g])], state)
    step = new[0][0] - 1.5
    assert np.sign(step) == -np.sign(g)
    assert abs(step) == pytest.approx(lr, rel=1e-4)
    assert state.step_count == 1


def test_zero_gradient_leaves_params(rng):
    params = [rng.standard_normal(4), rng.standard_normal((2, 3))]
    state = adam_init(params)
    new, state = adam_step(params, [np.zeros(4), np.zeros((2, 3))], state)
    for a, b in zip(new, params):
        np.testing.assert_array_equal(a, b)
    assert state.step_count == 1


def test_nan_gradient_raises():
    params = [np.zeros(3)]
    with pytest.raises(NonFiniteError):
        adam_step(params, [np.array([0.0, np.nan, 0.0])], adam_init(params))


def test_matches_reference_recurrence(rng):
    params = [rng.standard_normal(5)]
    state = adam_init(params, lr=0.01)
    p = params[0].copy()
    m = np.zeros(5)
    v = np.zeros(5)
    for t in range(1, 8):
        g = rng.standard_normal(5)
        params, state = adam_step(params, [g], state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        p = p - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(params[0], p, rtol=1e-12, atol=1e-15)


def test_state_validation():
    with pytest.raises(ValueError):
        AdamState((np.zeros(1),), (np.zeros(1),), lr=-1.0)
    with pytest.raises(ValueError):
        AdamState((np.zeros(1),), (np.zeros(1),), beta1=1.0)
