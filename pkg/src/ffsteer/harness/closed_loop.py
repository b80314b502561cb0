"""Closed-loop lap simulation: target generator, feedforward, feedback, plant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ffsteer.controllers.base import FeedforwardController, FfInput
from ffsteer.controllers.lateral import (
    FeedbackGains,
    SpeedParams,
    TargetGains,
    feedback_steer,
    speed_controller,
    target_generator,
)
from ffsteer.errors import NumericalDivergence, OffTrack
from ffsteer.harness.telemetry import COLUMNS, TelemetryLog
from ffsteer.metrics import MetricSet, compute_metrics, lateral_jerk_rms
from ffsteer.planner import Trajectory, target_horizon
from ffsteer.track import Track
from ffsteer.vehicle import M_AX, M_AY, Plant, VehicleParams

FAIL_THRESHOLD = 2.2
CONTROL_DT = 0.01
PLANT_DT = 0.001


@dataclass
class SimSettings:
    plant_dt: float = PLANT_DT
    substeps: int = 10
    horizon_n: int = 10
    fail_threshold: float = FAIL_THRESHOLD
    feedback: FeedbackGains = field(default_factory=FeedbackGains)
    targets: TargetGains = field(default_factory=TargetGains)

    @property
    def control_dt(self) -> float:
        return self.plant_dt * self.substeps


@dataclass
class SimResult:
    telemetry: TelemetryLog
    crossings: list
    failed: bool
    fail_s: float | None = None
    cause: str | None = None

    @property
    def lap_times(self) -> list[float]:
        return [b - a for a, b in zip(self.crossings[:-1], self.crossings[1:])]


def simulate(
    track: Track,
    schedule: list[tuple[float, Trajectory]],
    vehicle: VehicleParams,
    ff: FeedforwardController,
    settings: SimSettings | None = None,
    lap_offset: int = 0,
    max_time: float | None = None,
) -> SimResult:
    """Drive one lap per schedule entry, continuously, from a flying start at s = 0.

    ``schedule`` holds (gg_scale, trajectory) per lap. The run stops after
    the last lap, or with ``failed`` set as soon as the lateral error reaches
    the failure threshold, the plant diverges, or the car leaves the track.
    Start-line crossing times are interpolated between controller steps.
    """
    st = settings or SimSettings()
    plant = Plant(vehicle, st.plant_dt)
    speed = SpeedParams.from_vehicle(vehicle)
    dtc = st.control_dt
    L = track.total_length
    ff.reset()
    fb_state: dict = {}
    gg0, traj0 = schedule[0]
    x = np.array([track.x[0], track.y[0], track.heading[0], float(traj0.v[0]), 0.0, 0.0, 0.0])
    ax_meas = ay_meas = 0.0
    uses_horizon = getattr(ff, "uses_horizon", False)

    rows = []
    crossings = [0.0]
    lap = 0
    t = 0.0
    s_prev = 0.0
    failed = False
    fail_s = None
    cause = None
    n_laps = len(schedule)
    t_limit = max_time if max_time is not None else 4.0 * n_laps * max(tr.lap_time() for _, tr in schedule) + 30.0
    while True:
        try:
            # heading error of the velocity vector (course), so body sideslip
            # does not hide a steady drift across the path
            course = float(x[2]) + math.atan2(float(x[4]), float(x[3]))
            proj = track.project_pose(float(x[0]), float(x[1]), course, s_prev)
        except OffTrack as exc:
            failed, fail_s, cause = True, s_prev, f"off track: {exc}"
            break
        s = proj.s
        if s_prev > 0.5 * L and s < 0.5 * L:
            frac = (L - s_prev) / (L - s_prev + s)
            crossings.append(t - dtc + frac * dtc)
            lap += 1
            if lap >= n_laps:
                break
        s_prev = s
        gg, traj = schedule[lap]
        e, epsi = proj.lateral_error, proj.heading_error
        vx = float(x[3])

        a_y_t, a_x_t = target_generator(e, epsi, traj, s, vx, st.targets)
        horizon = None
        if uses_horizon:
            horizon = target_horizon(traj, s, vx, a_y_t, a_x_t, st.horizon_n, dtc, st.targets.preview_time)[0]
        d_ff = ff.command(FfInput(a_y_t, vx, ax_meas, horizon), dtc)
        d_fb = feedback_steer(e, epsi, a_y_t - ay_meas, st.feedback, dtc, fb_state)
        v_ref = float(traj.at("v", s))
        f_drive = speed_controller(vx, a_x_t, speed, v_ref)
        rows.append((
            t, s, x[0], x[1], x[2], x[3], x[4], x[5], x[6], d_ff, d_fb, ax_meas, ay_meas,
            a_y_t, a_x_t, v_ref, e, epsi, lap + lap_offset, gg,
        ))
        if abs(e) >= st.fail_threshold:
            failed, fail_s, cause = True, s, f"lateral error {e:.3f} m"
            break
        if not math.isfinite(d_ff):
            failed, fail_s, cause = True, s, "non-finite feedforward"
            break
        try:
            x, meas = plant.advance(x, d_ff + d_fb, f_drive, st.substeps)
        except NumericalDivergence as exc:
            failed, fail_s, cause = True, s, f"divergence: {exc}"
            break
        ax_meas = float(meas[M_AX])
        ay_meas = float(meas[M_AY])
        t += dtc
        if t > t_limit:
            failed, fail_s, cause = True, s, "time limit"
            break
    tel = TelemetryLog.from_rows(np.array(rows, dtype=float)) if rows else TelemetryLog()
    return SimResult(tel, crossings, failed, fail_s, cause)


def simulate_point_mass(track: Track, traj: Trajectory, gains: TargetGains, dt: float = CONTROL_DT, substeps: int = 10) -> TelemetryLog:
    """One lap of a kinematic point mass that realises the targets exactly.

    Lateral acceleration turns the velocity vector (heading rate a_y / v)
    and longitudinal acceleration changes speed; both are held constant
    over a controller step and integrated with explicit Euler substeps.
    Isolates the target generator from the vehicle dynamics.
    """
    L = track.total_length
    x, y, psi, v = float(track.x[0]), float(track.y[0]), float(track.heading[0]), float(traj.v[0])
    s_prev, t = 0.0, 0.0
    h = dt / substeps
    rows = []
    while True:
        proj = track.project_pose(x, y, psi, s_prev)
        if s_prev > 0.5 * L and proj.s < 0.5 * L:
            break
        s_prev = proj.s
        a_y, a_x = target_generator(proj.lateral_error, proj.heading_error, traj, proj.s, v, gains)
        v_ref = float(traj.at("v", proj.s))
        rows.append((
            t, proj.s, x, y, psi, v, 0.0, a_y / v, 0.0, 0.0, 0.0, a_x, a_y,
            a_y, a_x, v_ref, proj.lateral_error, proj.heading_error, 0.0, traj.limits.gg_scale,
        ))
        for _ in range(substeps):
            x += v * math.cos(psi) * h
            y += v * math.sin(psi) * h
            psi += a_y / v * h
            v = max(v + a_x * h, 1.0)
        t += dt
    return TelemetryLog.from_rows(np.array(rows))


@dataclass
class RunReport:
    controller: str
    gg_scale: float
    feedback: bool
    lap_times: list
    failed: bool
    fail_s: float | None
    cause: str | None
    max_abs_lateral_error: float
    lateral_error: MetricSet | None
    velocity_error: MetricSet | None
    ay_error: MetricSet | None
    lateral_jerk_rms: float
    telemetry_file: str | None = None
    telemetry: TelemetryLog | None = field(default=None, repr=False)

    @property
    def lap_time(self) -> float:
        return float(np.mean(self.lap_times)) if self.lap_times else float("nan")

    def to_dict(self) -> dict:
        def ms(m):
            return None if m is None else m.to_dict()

        return {
            "controller": self.controller,
            "gg_scale": self.gg_scale,
            "feedback": self.feedback,
            "lap_times": list(self.lap_times),
            "lap_time": self.lap_time if self.lap_times else None,
            "failed": self.failed,
            "fail_s": self.fail_s,
            "cause": self.cause,
            "max_abs_lateral_error": self.max_abs_lateral_error,
            "lateral_error": ms(self.lateral_error),
            "velocity_error": ms(self.velocity_error),
            "ay_error": ms(self.ay_error),
            "lateral_jerk_rms": self.lateral_jerk_rms,
            "telemetry_file": self.telemetry_file,
        }


def _error_metrics(err: np.ndarray) -> MetricSet | None:
    if len(err) < 2:
        return None
    return compute_metrics(np.zeros_like(err), err, allow_zero_variance=True)


def make_report(name: str, gg: float, feedback: bool, res: SimResult, warmup_laps: int = 1) -> RunReport:
    tel = res.telemetry
    timed = tel.select(tel["lap_id"] - tel["lap_id"].min() >= warmup_laps) if len(tel) else tel
    if len(timed) < 3:
        timed = tel
    # completed timed laps count even when a later lap fails
    lap_times = res.lap_times[warmup_laps:]
    lat = tel["lat_err"] if len(tel) else np.zeros(0)
    jerk = lateral_jerk_rms(timed["ay_meas"], CONTROL_DT) if len(timed) >= 3 else float("nan")
    return RunReport(
        controller=name,
        gg_scale=gg,
        feedback=feedback,
        lap_times=[float(v) for v in lap_times],
        failed=res.failed,
        fail_s=res.fail_s,
        cause=res.cause,
        max_abs_lateral_error=float(np.max(np.abs(lat))) if len(lat) else float("nan"),
        lateral_error=_error_metrics(timed["lat_err"]),
        velocity_error=_error_metrics(timed["v_target"] - timed["vx"]),
        ay_error=_error_metrics(timed["ay_target"] - timed["ay_meas"]),
        lateral_jerk_rms=jerk,
        telemetry=tel,
    )
