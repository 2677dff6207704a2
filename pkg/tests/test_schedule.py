import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifdiff.errors import InvalidConfigError, InvalidStepError
from ifdiff.schedule import (NoiseSchedule, cosine_schedule, linear_schedule, make_schedule,
                             scale_schedule)


def test_linear_endpoints():
    s = linear_schedule(4, 0.1, 0.4)
    np.testing.assert_allclose(s.beta, [0.1, 0.2, 0.3, 0.4], rtol=0, atol=1e-15)


def test_cumulative_product():
    s = NoiseSchedule.from_betas([0.1, 0.2])
    np.testing.assert_allclose(s.alpha, [0.9, 0.8], rtol=0, atol=1e-15)
    np.testing.assert_allclose(s.alpha_bar, [0.9, 0.72], rtol=0, atol=1e-15)
    assert s.posterior_var[0] == s.beta[0]
    assert s.posterior_var[1] == pytest.approx(0.2 * 0.1 / 0.28)


@pytest.mark.parametrize("args", [(1, 0.1, 0.2), (10, 0.0, 0.1), (10, 0.2, 0.1), (10, 0.1, 1.0)])
def test_linear_rejects(args):
    with pytest.raises(InvalidConfigError):
        linear_schedule(*args)


def test_default_schedule_reaches_noise():
    s = linear_schedule()
    assert s.T == 200 and s.beta[-1] == pytest.approx(0.05)
    assert s.alpha_bar[-1] < 0.01


def test_cosine_golden():
    s = cosine_schedule(100, 0.008).check()
    # 40-digit mpmath evaluation of the f-ratio with the final beta clipped to 0.999
    assert s.alpha_bar[-1] == pytest.approx(2.428572279350056e-07, rel=1e-12)
    assert s.alpha_bar[98] == pytest.approx(2.428572279350056e-04, rel=1e-12)
    assert s.alpha_bar[-1] < 0.01
    assert np.all((s.beta >= 1e-6) & (s.beta <= 0.999))


@pytest.mark.parametrize("s", [0.0, -0.1])
def test_cosine_rejects_offset(s):
    with pytest.raises(InvalidConfigError):
        cosine_schedule(10, s)


def test_scale_identity_and_double():
    s = linear_schedule(10, 1e-3, 0.1)
    assert scale_schedule(s, 1.0) == s
    assert np.array_equal(scale_schedule(s, 1.0).alpha_bar, s.alpha_bar)
    d = scale_schedule(NoiseSchedule.from_betas([0.1, 0.2]), 2.0)
    np.testing.assert_allclose(d.beta, [0.2, 0.4], rtol=0, atol=1e-15)


def test_scale_rejects_overflow():
    with pytest.raises(InvalidConfigError):
        scale_schedule(NoiseSchedule.from_betas([0.5, 0.6]), 2.0)
    with pytest.raises(InvalidConfigError):
        scale_schedule(NoiseSchedule.from_betas([0.1, 0.2]), 0.0)


def test_step_index_convention():
    s = linear_schedule(5, 0.1, 0.5)
    assert s.index(1) == 0 and s.index(5) == 4
    assert s.alpha_bar_prev(1) == 1.0 and s.alpha_bar_prev(2) == s.alpha_bar[0]
    for bad in (0, 6, 1.5):
        with pytest.raises(InvalidStepError):
            s.index(bad)


def test_make_schedule_family():
    assert make_schedule("cosine", 10) == cosine_schedule(10)
    with pytest.raises(InvalidConfigError):
        make_schedule("sigmoid", 10)


@settings(max_examples=60, deadline=None)
@given(T=st.integers(2, 400), lo=st.floats(1e-6, 0.2), span=st.floats(0, 0.5))
def test_linear_invariants(T, lo, span):
    hi = min(lo + span, 0.9)
    s = linear_schedule(T, lo, hi).check()
    # reconstruction from beta reproduces alpha_bar bit for bit
    assert np.array_equal(NoiseSchedule.from_betas(s.beta).alpha_bar, s.alpha_bar)


@settings(max_examples=40, deadline=None)
@given(T=st.integers(2, 400), s=st.floats(1e-4, 1.0))
def test_cosine_invariants(T, s):
    sched = cosine_schedule(T, s).check()
    unclipped = sched.beta[:-1]
    assert math.isfinite(sched.alpha_bar[-1]) and np.all(unclipped > 0)


@settings(max_examples=40, deadline=None)
@given(factor=st.floats(0.01, 10.0))
def test_scaled_invariants(factor):
    base = linear_schedule(50, 1e-4, 0.05)
    try:
        s = scale_schedule(base, factor)
    except InvalidConfigError:
        assert factor * base.beta.max() >= 1
        return
    s.check()
    np.testing.assert_allclose(s.beta, factor * base.beta, rtol=1e-15)
