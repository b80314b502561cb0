import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffsteer.controllers import (
    AckermannFF,
    BaselineFF,
    BaselineParams,
    EhdFF,
    EhdFit,
    EhdSurface,
    FeedbackGains,
    FfInput,
    SpeedParams,
    TargetGains,
    ackermann,
    feedback_steer,
    ff_baseline,
    ff_ehd,
    fit_constant_gradient,
    fit_ehd,
    speed_controller,
    target_generator,
)
from ffsteer.errors import RankDeficient
from ffsteer.planner import GgLimits, plan_velocity
from ffsteer.track import Segment, build_synthetic_track

TRUE = EhdSurface(kt_v1a3=1e-6, kt_a3=-2e-5, kt_v1a1=-4e-6, kt_a1=1.2e-3)


def generating_dev(a, v):
    """Deviation written out from the four generating coefficients."""
    return a * (1e-6 * a * a * v - 2e-5 * a * a - 4e-6 * v + 1.2e-3)


def grid_samples():
    a, v = np.meshgrid(np.arange(2.0, 21.0), np.arange(15.0, 61.0, 5.0))
    a, v = a.ravel(), v.ravel()
    return a, v, generating_dev(a, v)


def settle(ff, inp, steps=2000, dt=0.01):
    out = 0.0
    for _ in range(steps):
        out = ff.command(inp, dt)
    return out


# ---------------------------------------------------------------- baseline
def test_baseline_examples():
    ff = BaselineFF(BaselineParams(k_ug=1e-3, k_long_pos=0.0, k_long_neg=2e-4, tau_ug=0.1, tau_long=0.1), 3.0)
    assert settle(ff, FfInput(10.0, 50.0, 0.0)) == pytest.approx(0.022, abs=1e-12)
    ff.reset()
    assert settle(ff, FfInput(10.0, 50.0, -10.0)) == pytest.approx(0.002, abs=1e-12)
    assert settle(ff, FfInput(0.0, 50.0, -10.0)) == pytest.approx(0.0, abs=1e-12)


def test_baseline_ack_not_filtered():
    ff = BaselineFF(BaselineParams(k_ug=1e-3, tau_ug=0.5), 3.0)
    first = ff.command(FfInput(10.0, 50.0), 0.01)
    assert first == pytest.approx(10 * 3 / 2500 + (1 - math.exp(-0.02)) * 0.01)


def test_baseline_lowpass_step_response():
    tau, dt = 0.2, 0.01
    p = BaselineParams(k_ug=1.0, k_long_pos=0.0, k_long_neg=0.0, tau_ug=tau, tau_long=0.0)
    state = {}
    for _ in range(int(round(tau / dt))):
        out = ff_baseline(FfInput(1.0, 1e6), p, 3.0, dt, state)
    assert state["ug"] == pytest.approx(1 - math.exp(-1), rel=0.02)
    assert out == pytest.approx(state["ug"], abs=1e-9)


def test_baseline_rejects_negative_tau():
    with pytest.raises(ValueError):
        BaselineParams(tau_ug=-0.1)


@settings(max_examples=100, deadline=None)
@given(a_y=st.floats(-40, 40), v=st.floats(1.0, 90.0), a_x=st.floats(-30, 15))
def test_baseline_zero_gains_is_ackermann(a_y, v, a_x):
    p = BaselineParams(k_ug=0.0, k_long_pos=0.0, k_long_neg=0.0)
    inp = FfInput(a_y, v, a_x)
    assert ff_baseline(inp, p, 3.0, 0.01, {}) == ackermann(a_y, v, 3.0)


# --------------------------------------------------------------------- EHD
def test_ehd_zero_and_identity():
    assert ff_ehd(FfInput(0.0, 30.0), TRUE, 3.0) == 0.0
    assert ff_ehd(FfInput(12.0, 30.0), EhdSurface(), 3.0) == ackermann(12.0, 30.0, 3.0)


@settings(max_examples=200, deadline=None)
@given(a_y=st.floats(-40, 40), v=st.floats(1.0, 90.0))
def test_ehd_odd_in_ay(a_y, v):
    pos = ff_ehd(FfInput(a_y, v), TRUE, 3.0) - ackermann(a_y, v, 3.0)
    neg = ff_ehd(FfInput(-a_y, v), TRUE, 3.0) - ackermann(-a_y, v, 3.0)
    assert neg == -pos
    assert TRUE.delta_dev(-a_y, v) == -TRUE.delta_dev(a_y, v)


@settings(max_examples=200, deadline=None)
@given(a_y=st.floats(-60, 60), v=st.floats(0.0, 100.0), a_x=st.floats(-40, 40))
def test_feedforward_outputs_finite(a_y, v, a_x):
    inp = FfInput(a_y, v, a_x)
    assert math.isfinite(ff_ehd(inp, TRUE, 3.0))
    assert math.isfinite(ff_baseline(inp, BaselineParams(), 3.0, 0.01, {}))


def test_fit_recovers_noiseless():
    a, v, d = grid_samples()
    fit = fit_ehd(a, v, d)
    np.testing.assert_allclose(fit.surface.coefficients(), TRUE.coefficients(), rtol=1e-10)
    assert fit.residual_rms < 1e-12
    assert ff_ehd(FfInput(15.0, 30.0), fit.surface, 3.0) == pytest.approx(
        15.0 * 3.0 / 900.0 + generating_dev(15.0, 30.0), abs=1e-12
    )


def noisy(n, seed, sigma=1e-3):
    rng = np.random.default_rng(seed)
    a = rng.uniform(2.0, 20.0, n) * rng.choice([-1.0, 1.0], n)
    v = rng.uniform(15.0, 60.0, n)
    return a, v, generating_dev(a, v) + rng.normal(0.0, sigma, n)


def test_fit_with_noise():
    a, v, d = noisy(2000, 0)
    fit = fit_ehd(a, v, d)
    assert fit.residual_rms == pytest.approx(1e-3, rel=0.1)
    err = fit.surface.delta_dev(a, v) - generating_dev(a, v)
    assert np.sqrt(np.mean(err**2)) < 2e-3


def test_fit_standard_error_shrinks_as_sqrt_n():
    spread = {}
    for n in (500, 2000):
        coefs = np.array([fit_ehd(*noisy(n, seed)).surface.coefficients() for seed in range(40)])
        spread[n] = coefs.std(axis=0)
    ratio = spread[500] / spread[2000]
    assert np.all((ratio > 1.4) & (ratio < 2.9))


def test_fit_single_speed_is_rank_deficient():
    a = np.linspace(2, 20, 50)
    with pytest.raises(RankDeficient):
        fit_ehd(a, np.full_like(a, 30.0), 1e-3 * a)


def test_fit_needs_four_usable_samples():
    with pytest.raises(RankDeficient):
        fit_ehd([0.1, 0.2, 5.0, 6.0, 7.0], [10, 20, 30, 40, 50], [0, 0, 1e-3, 1e-3, 1e-3])


def test_fit_residual_not_worse_than_constant_gradient_in_z():
    a, v, d = noisy(1000, 3)
    d = d + 2e-4 * np.sin(a)
    fit = fit_ehd(a, v, d)
    k, _ = fit_constant_gradient(a, d)
    z = d / a
    z_ehd = fit.surface.secant_gradient(a, v)
    assert np.sum((z_ehd - z) ** 2) <= np.sum((k - z) ** 2)


def test_fit_json_round_trip(tmp_path):
    fit = fit_ehd(*grid_samples())
    fit.to_json(tmp_path / "ehd.json")
    back = EhdFit.from_json(tmp_path / "ehd.json")
    assert back.surface == fit.surface and back.n_samples == fit.n_samples


def test_factored_rank1_surface():
    s = EhdSurface(kt_v1a3=2e-7 * 3, kt_a3=2e-7 * 5, kt_v1a1=-1e-4 * 3, kt_a1=-1e-4 * 5)
    f = s.factored()
    assert f["rank1_residual"] < 1e-18
    assert f["k_a3"] * f["k_v1"] == pytest.approx(s.kt_v1a3, rel=1e-9)
    assert f["k_a1"] * f["k_v0"] == pytest.approx(s.kt_a1, rel=1e-9)


def test_fit_on_plant_shows_progressive_speed_dependent_understeer(params):
    from ffsteer.vehicle import steady_state_sweep

    a_s, v_s, d_s = [], [], []
    for v in (25.0, 35.0, 45.0):
        for r in steady_state_sweep(params, v, [3.0, 7.0, 11.0, 15.0, 19.0]):
            a_s.append(r["a_y"])
            v_s.append(r["v_x"])
            d_s.append(r["delta_dev"])
    surf = fit_ehd(a_s, v_s, d_s).surface
    for v in (25.0, 45.0):
        assert surf.secant_gradient(18.0, v) > surf.secant_gradient(4.0, v)
    assert surf.secant_gradient(18.0, 25.0) != pytest.approx(surf.secant_gradient(18.0, 45.0), rel=0.02)


def test_ehd_ff_class_matches_function():
    ff = EhdFF(TRUE, 3.0)
    inp = FfInput(8.0, 40.0, 1.0)
    assert ff.command(inp, 0.01) == ff_ehd(inp, TRUE, 3.0)
    series = ff.predict_series(np.array([8.0, -3.0]), np.array([40.0, 20.0]), np.zeros(2), None, 0.01)
    assert series[1] == ff_ehd(FfInput(-3.0, 20.0), TRUE, 3.0)
    assert AckermannFF(3.0).command(inp, 0.01) == ackermann(8.0, 40.0, 3.0)


# ---------------------------------------------------------------- feedback
def test_feedback_examples():
    g = FeedbackGains(kp=0.01, kd=0.0, k_heading=0.0)
    assert feedback_steer(0.0, 0.0, 0.0, FeedbackGains(), 0.01, {}) == 0.0
    assert feedback_steer(1.0, 0.0, 0.0, g, 0.01, {}) == pytest.approx(-0.01)
    off = FeedbackGains(enabled=False)
    assert feedback_steer(1.5, 0.3, 4.0, off, 0.01, {}) == 0.0


def test_feedback_saturates():
    g = FeedbackGains(kp=1.0, limit=0.05)
    assert feedback_steer(10.0, 0.0, 0.0, g, 0.01, {}) == -0.05
    assert feedback_steer(-10.0, 0.0, 0.0, g, 0.01, {}) == 0.05


def test_feedback_derivative_uses_state():
    g = FeedbackGains(kp=0.0, kd=0.01, k_heading=0.0)
    st_ = {}
    assert feedback_steer(0.0, 0.0, 0.0, g, 0.01, st_) == 0.0
    assert feedback_steer(0.001, 0.0, 0.0, g, 0.01, st_) == pytest.approx(-0.001)


def test_feedback_rejects_bad_gains():
    with pytest.raises(ValueError):
        FeedbackGains(kp=-1.0)
    with pytest.raises(ValueError):
        FeedbackGains(kd=float("inf"))


# ----------------------------------------------------------------- targets
@pytest.fixture(scope="module")
def circle_traj():
    t = build_synthetic_track([Segment("arc", 2 * math.pi * 50.0, 0.02)])
    return plan_velocity(t, GgLimits(a_y_max=20.0))


@pytest.fixture(scope="module")
def straight_traj():
    t = build_synthetic_track(
        [Segment("straight", 400.0), Segment("arc", math.pi * 40, 1 / 40), Segment("straight", 400.0), Segment("arc", math.pi * 40, 1 / 40)]
    )
    return plan_velocity(t, GgLimits())


def test_targets_on_path_constant_curvature(circle_traj):
    v = float(circle_traj.v[0])
    a_y, a_x = target_generator(0.0, 0.0, circle_traj, 10.0, v, TargetGains())
    assert a_y == pytest.approx(0.02 * v * v, rel=1e-12)
    assert a_x == pytest.approx(0.0, abs=1e-9)


def test_targets_sign_convention(straight_traj):
    s = 150.0
    v = float(straight_traj.at("v", s))
    a_y, _ = target_generator(-1.0, 0.0, straight_traj, s, v, TargetGains(k_e=0.3, k_psi=0.0))
    assert a_y == pytest.approx(0.3, abs=1e-12)


def test_targets_clip_to_nominal_limit(straight_traj):
    a_y, _ = target_generator(-100.0, 0.0, straight_traj, 150.0, 30.0, TargetGains())
    assert a_y == straight_traj.limits.a_y_max


def point_mass_lap(track, gg, gains=TargetGains(), dt=0.01, sub=10):
    """Kinematic point mass that realises the lateral and longitudinal targets exactly."""
    traj = plan_velocity(track, GgLimits(gg_scale=gg))
    x = y = psi = s = 0.0
    v = float(traj.v[0])
    e_max, L = 0.0, track.total_length
    while True:
        p = track.project_pose(x, y, psi, s)
        if s > 0.5 * L and p.s < 0.5 * L:
            return e_max
        s = p.s
        e_max = max(e_max, abs(p.lateral_error))
        a_y, a_x = target_generator(p.lateral_error, p.heading_error, traj, s, v, gains)
        h = dt / sub
        for _ in range(sub):
            x += v * math.cos(psi) * h
            y += v * math.sin(psi) * h
            psi += a_y / v * h
            v += a_x * h


def test_point_mass_follower_bounded(track):
    assert point_mass_lap(track, 0.7) < 0.3


# ------------------------------------------------------------------- speed
def test_speed_controller_examples():
    p = SpeedParams(mass=750.0, drag_coeff=0.0, kp=300.0)
    assert speed_controller(30.0, 0.0, p) == 0.0
    assert speed_controller(30.0, 5.0, p) == 3750.0
    assert speed_controller(30.0, 50.0, p) == p.max_drive_force
    assert speed_controller(30.0, -50.0, p) == -p.max_brake_force
    assert speed_controller(30.0, 0.0, p, v_target=31.0) == 300.0


def test_speed_controller_drag(params):
    p = SpeedParams.from_vehicle(params)
    assert speed_controller(40.0, 0.0, p) == pytest.approx(params.drag_coeff * 1600.0)
