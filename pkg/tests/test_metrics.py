import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ffsteer.errors import ZeroVariance
from ffsteer.metrics import (
    MetricSet,
    compute_metrics,
    cornering_filter,
    cornering_mask,
    direction_normalized_error,
    lateral_jerk_rms,
    lowpass_filter,
    xcorr_lag,
)

finite = st.floats(-10.0, 10.0, allow_nan=False)


def test_three_point_fixture():
    m = compute_metrics([0.0, 1.0, 2.0], [0.0, 1.0, 3.0])
    assert abs(m.rmse - math.sqrt(1 / 3)) < 1e-12
    assert abs(m.mae - 1 / 3) < 1e-12
    assert abs(m.fvu - 0.5) < 1e-12
    assert m.n == 3


def test_perfect_prediction():
    y = [0.3, -1.0, 2.0]
    assert compute_metrics(y, y) == MetricSet(0.0, 0.0, 0.0, 3)


def test_mean_predictor_has_unit_fvu(rng):
    y = rng.normal(size=500)
    assert compute_metrics(y, np.full_like(y, y.mean())).fvu == pytest.approx(1.0, abs=1e-12)


def test_zero_variance():
    with pytest.raises(ZeroVariance):
        compute_metrics([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    m = compute_metrics([1.0, 1.0], [1.0, 2.0], allow_zero_variance=True)
    assert math.isnan(m.fvu) and m.to_dict()["fvu"] is None


def test_bad_lengths():
    with pytest.raises(ValueError):
        compute_metrics([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        compute_metrics([1.0], [1.0])


@settings(max_examples=100, deadline=None)
@given(y=arrays(float, 20, elements=finite), yh=arrays(float, 20, elements=finite), c=st.floats(0.1, 100.0), sign=st.sampled_from([-1.0, 1.0]))
def test_scale_equivariance(y, yh, c, sign):
    if np.ptp(y) < 1e-3:
        return
    c *= sign
    a = compute_metrics(y, yh)
    b = compute_metrics(c * y, c * yh)
    assert b.rmse == pytest.approx(abs(c) * a.rmse, rel=1e-9, abs=1e-12)
    assert b.mae == pytest.approx(abs(c) * a.mae, rel=1e-9, abs=1e-12)
    assert b.fvu == pytest.approx(a.fvu, rel=1e-9, abs=1e-12)
    assert a.rmse >= a.mae - 1e-12 and a.fvu >= 0


def test_cornering_filter_cases():
    rho = np.array([0.0, 0.001, 0.003, -0.004, 0.02, -0.0029])
    rec = {"rho": rho, "delta": np.arange(6.0)}
    out = cornering_filter(rec)
    np.testing.assert_array_equal(out["delta"], [2.0, 3.0, 4.0])
    assert len(cornering_filter({"rho": np.zeros(5)})["rho"]) == 0
    same = cornering_filter(rec, rho_min=0.0)
    np.testing.assert_array_equal(same["delta"], rec["delta"])


@settings(max_examples=100, deadline=None)
@given(rho=arrays(float, 30, elements=st.floats(-0.05, 0.05)), r1=st.floats(0.0, 0.05), r2=st.floats(0.0, 0.05))
def test_cornering_filter_composition(rho, r1, r2):
    rec = {"rho": rho, "i": np.arange(30)}
    twice = cornering_filter(cornering_filter(rec, r1), r2)
    once = cornering_filter(rec, max(r1, r2))
    np.testing.assert_array_equal(twice["i"], once["i"])
    assert cornering_mask(rho, 0.0).all()


def test_direction_normalized_error():
    e = direction_normalized_error([0.12, -0.12, 0.05], [0.1, -0.1, 0.0])
    np.testing.assert_allclose(e, [0.02, 0.02, 0.0])


def test_xcorr_constructed_shift(rng):
    x = lowpass_filter(rng.normal(size=2000), 0.01, 5.0)
    shifted = np.concatenate([np.zeros(9), x[:-9]])
    res = xcorr_lag(x, shifted, 0.01, 0.5)
    assert res.lag == pytest.approx(0.09, abs=1e-12)


def test_xcorr_self():
    t = np.arange(1000) * 0.01
    a = np.sin(2 * t) + 0.3 * np.sin(7 * t)
    res = xcorr_lag(a, a, 0.01, 1.0)
    assert res.lag == 0.0 and res.peak == pytest.approx(1.0, abs=1e-12)
    assert len(res.lags) == len(res.correlation) == 201


def test_xcorr_errors():
    with pytest.raises(ZeroVariance):
        xcorr_lag(np.ones(100), np.arange(100.0), 0.01, 0.1)
    with pytest.raises(ValueError):
        xcorr_lag(np.arange(100.0), np.arange(100.0), 0.01, 0.6)


@settings(max_examples=30, deadline=None)
@given(k=st.integers(-30, 30), seed=st.integers(0, 1000))
def test_xcorr_antisymmetric(k, seed):
    x = lowpass_filter(np.random.default_rng(seed).normal(size=1200), 0.01, 8.0)
    a = x[100:1100]
    b = x[100 - k:1100 - k]
    ab = xcorr_lag(a, b, 0.01, 0.4)
    ba = xcorr_lag(b, a, 0.01, 0.4)
    assert ab.lag == pytest.approx(k * 0.01, abs=1e-12)
    assert ba.lag == pytest.approx(-ab.lag, abs=1e-12)


def test_jerk_constant_is_zero():
    assert lateral_jerk_rms(np.full(500, 7.0), 0.01) == pytest.approx(0.0, abs=1e-9)


def test_jerk_sinusoid():
    dt, w = 0.01, 2.0
    # an integer number of periods keeps the RMS exact
    t = np.arange(int(round(20 * math.pi / dt))) * dt
    assert lateral_jerk_rms(np.sin(w * t), dt) == pytest.approx(w / math.sqrt(2), rel=0.01)


def test_jerk_filter_attenuates_noise(rng):
    dt = 0.001
    t = np.arange(20000) * dt
    noise = np.sin(2 * math.pi * 150.0 * t + 0.3) + np.sin(2 * math.pi * 230.0 * t)
    raw = lateral_jerk_rms(noise, dt, cutoff_hz=1e9)
    filt = lateral_jerk_rms(noise, dt)
    assert 20 * math.log10(raw / filt) > 20.0


def test_jerk_needs_three_samples():
    with pytest.raises(ValueError):
        lateral_jerk_rms([1.0, 2.0], 0.01)
