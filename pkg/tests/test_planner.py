import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffsteer.errors import InfeasibleTrack
from ffsteer.planner import GgLimits, Trajectory, plan_velocity, sample_horizon, sample_horizon_batch, target_horizon
from ffsteer.track import Segment, build_synthetic_track

GG_GRID = (0.3, 0.5, 0.7, 0.9, 1.0, 1.2)


@pytest.fixture(scope="module")
def plans(track):
    return {g: plan_velocity(track, GgLimits(gg_scale=g)) for g in GG_GRID}


def stadium(straight=300.0, radius=20.0):
    arc = Segment("arc", math.pi * radius, 1.0 / radius)
    return build_synthetic_track([Segment("straight", straight), arc, Segment("straight", straight), arc])


def test_limits():
    lim = GgLimits(gg_scale=0.5)
    assert (lim.drive, lim.brake, lim.lateral) == (5.0, 12.5, 12.5)
    with pytest.raises(ValueError):
        GgLimits(gg_scale=1.3)
    with pytest.raises(ValueError):
        GgLimits(a_y_max=-1.0)


def test_circle_constant_speed():
    t = build_synthetic_track([Segment("arc", 2 * math.pi * 50.0, 0.02)])
    traj = plan_velocity(t, GgLimits(a_y_max=20.0, gg_scale=1.0))
    np.testing.assert_allclose(traj.v, math.sqrt(20.0 / 0.02), rtol=1e-12)
    assert traj.v[0] == pytest.approx(31.623, abs=1e-3)
    np.testing.assert_allclose(traj.a_x, 0.0, atol=1e-9)
    horizon = sample_horizon(traj, 12.3, 10, 0.01)
    np.testing.assert_allclose(horizon, np.tile(horizon[0], (10, 1)), atol=1e-9)


def test_straight_between_hairpins_is_symmetric():
    t = stadium()
    lim = GgLimits(a_x_max_drive=8.0, a_x_max_brake=8.0, a_y_max=20.0)
    traj = plan_velocity(t, lim, v_cap=80.0)
    x = np.linspace(0.0, 300.0, 601)
    u = traj.at("v", x) ** 2
    # the joints fall between samples, so mirror images may differ by one sample of acceleration
    np.testing.assert_allclose(u, u[::-1], atol=2 * 8.0 * t.spacing)
    v = traj.at("v", x)
    peak = np.argmax(v)
    assert np.all(np.diff(v[: peak + 1]) >= 0) and np.all(np.diff(v[peak:]) <= 0)


def test_straight_capped_gives_trapezoid():
    t = stadium(straight=600.0)
    traj = plan_velocity(t, GgLimits(a_x_max_drive=8.0, a_x_max_brake=8.0, a_y_max=20.0), v_cap=40.0)
    assert traj.v.max() == pytest.approx(40.0)
    assert np.sum(traj.v == 40.0) > 100


def test_default_track_lap_time_decreases(plans):
    times = [plans[g].lap_time() for g in GG_GRID]
    assert all(b < a for a, b in zip(times, times[1:]))


def test_pointwise_monotone_in_gg(plans):
    for a, b in zip(GG_GRID, GG_GRID[1:]):
        assert np.all(plans[b].v >= plans[a].v - 1e-9)


def test_trajectory_invariants(plans):
    for traj in plans.values():
        np.testing.assert_allclose(traj.a_y, traj.curvature * traj.v**2, rtol=1e-12)
        assert np.max(traj.ellipse_usage()) <= 1.0 + 1e-6
        nz = traj.curvature != 0
        assert np.all(np.sign(traj.a_y[nz]) == np.sign(traj.curvature[nz]))
        assert np.all(traj.v >= 1.0)
        # braking reachability: no sample's speed drop exceeds the available deceleration
        u = traj.v**2
        du = np.roll(u, -1) - u
        assert np.all(du >= -2 * traj.track.spacing * traj.limits.brake - 1e-6)


def test_infeasible_track():
    t = build_synthetic_track([Segment("arc", 2 * math.pi * 0.5, 2.0)], spacing=0.05)
    with pytest.raises(InfeasibleTrack):
        plan_velocity(t, GgLimits(a_y_max=0.1, gg_scale=1.0))


def test_horizon_n1_equals_interpolation(plans):
    traj = plans[0.7]
    for s in (0.0, 123.4, traj.total_length - 0.2):
        h = sample_horizon(traj, s, 1, 0.01)
        assert h.shape == (1, 3)
        np.testing.assert_allclose(h[0], [traj.at("v", s), traj.at("a_x", s), traj.at("a_y", s)])


def test_horizon_wraps(plans):
    traj = plans[0.7]
    h = sample_horizon(traj, traj.total_length - 0.1, 10, 0.01)
    assert np.all(np.isfinite(h)) and h.shape == (10, 3)


def test_horizon_braking_zone(plans):
    traj = plans[0.9]
    # last sample before the first braking zone
    ax = traj.a_x
    k = int(np.flatnonzero((ax[:-1] >= 0) & (ax[1:] < -1.0))[0])
    s0 = traj.s[k] - 0.2 * traj.v[k]
    h = sample_horizon(traj, s0, 40, 0.01)
    assert h[0, 1] >= 0.0
    assert h[-1, 1] < -1.0
    assert np.all(np.diff(h[:, 1]) <= 1e-9)


def test_batch_matches_single(plans):
    traj = plans[0.5]
    s = np.array([1.0, 500.0, 1999.0])
    batch = sample_horizon_batch(traj, s, 10, 0.01)
    for i, si in enumerate(s):
        np.testing.assert_array_equal(batch[i], sample_horizon(traj, si, 10, 0.01))


def test_target_horizon_row0(plans):
    traj = plans[0.5]
    h = target_horizon(traj, 100.0, 20.0, 3.0, -1.0, 10, 0.01, 0.05)
    assert h.shape == (1, 10, 3)
    assert tuple(h[0, 0]) == (20.0, -1.0, 3.0)


def test_trajectory_csv(plans, tmp_path):
    plans[0.5].to_csv(tmp_path / "traj.csv")
    head = (tmp_path / "traj.csv").read_text().splitlines()[0]
    assert head == "s,x,y,curvature,v,ax,ay"


@settings(max_examples=20, deadline=None)
@given(g=st.floats(0.2, 1.2))
def test_ellipse_respected_for_any_scale(track, g):
    traj = plan_velocity(track, GgLimits(gg_scale=g))
    assert np.max(traj.ellipse_usage()) <= 1.0 + 1e-6
