"""Training-data collection and the offline reconstruction of logged inputs."""

from __future__ import annotations

import numpy as np

from ffsteer.controllers.base import MIN_VX, FeedforwardController
from ffsteer.errors import ClosedLoopFailure
from ffsteer.harness.closed_loop import simulate
from ffsteer.harness.config import RunConfig
from ffsteer.harness.telemetry import TelemetryLog
from ffsteer.metrics import xcorr_lag
from ffsteer.planner import Trajectory, target_horizon
from ffsteer.track import Track

N_TRAIN_LAPS = 26
RAMP_START = 0.55
RAMP_END = 0.95
TEST_LAP_GG = 0.8


def gg_ramp(n_laps: int = N_TRAIN_LAPS, start: float = RAMP_START, end: float = RAMP_END) -> list[float]:
    """Linearly increasing GG scales, rounded to 1e-6 so they print cleanly."""
    return [round(float(g), 6) for g in np.linspace(start, end, n_laps)]


def default_schedule(test_gg: float = TEST_LAP_GG) -> tuple[list[float], int]:
    """The training ramp followed by one held-out test lap; returns (schedule, test lap id)."""
    ramp = gg_ramp()
    return ramp + [test_gg], len(ramp)


class TrajectoryCache:
    """Plans each GG scale once; trajectories are immutable so sharing is safe."""

    def __init__(self, cfg: RunConfig, track: Track):
        self.cfg = cfg
        self.track = track
        self._plans: dict[float, Trajectory] = {}

    def __call__(self, gg: float) -> Trajectory:
        gg = float(gg)
        if gg not in self._plans:
            self._plans[gg] = self.cfg.plan(self.track, gg)
        return self._plans[gg]


def collect_dataset(
    cfg: RunConfig,
    ff: FeedforwardController,
    gg_schedule: list[float],
    track: Track | None = None,
    plans: TrajectoryCache | None = None,
) -> TelemetryLog:
    """Drive the schedule as one continuous run, one lap per GG scale.

    Lap ids in the log are the schedule indices.

    Raises:
        ClosedLoopFailure: if any lap fails; the partial log is attached.
    """
    track = track if track is not None else cfg.build_track()
    plans = plans if plans is not None else TrajectoryCache(cfg, track)
    schedule = [(float(g), plans(g)) for g in gg_schedule]
    res = simulate(track, schedule, cfg.build_vehicle(), ff, cfg.sim_settings())
    if res.failed:
        lap = int(res.telemetry["lap_id"][-1]) if len(res.telemetry) else 0
        raise ClosedLoopFailure(
            f"collection failed on lap {lap} (gg {gg_schedule[lap]}): {res.cause}",
            telemetry=res.telemetry,
            fail_s=res.fail_s,
        )
    return res.telemetry


def rebuild_horizons(log: TelemetryLog, plans: TrajectoryCache, cfg: RunConfig) -> np.ndarray:
    """Recompute the (M, N, 3) horizons seen online from the logged targets.

    The closed loop builds each horizon from (s, v_x, a_y target, a_x
    target) and the lap's trajectory, all of which are logged exactly, so
    the reconstruction is bit-identical to what the controller received.
    """
    settings = cfg.sim_settings()
    out = np.empty((len(log), settings.horizon_n, 3))
    gg = log["gg_scale"]
    for g in np.unique(gg):
        idx = np.flatnonzero(gg == g)
        out[idx] = target_horizon(
            plans(float(g)),
            log["s"][idx],
            log["vx"][idx],
            log["ay_target"][idx],
            log["ax_target"][idx],
            settings.horizon_n,
            settings.control_dt,
            settings.targets.preview_time,
        )
    return out


def steering_deviation(log: TelemetryLog, wheelbase: float, a_y_source: str = "ay_target") -> np.ndarray:
    """delta_measured - a_y l / v_x^2 for every row."""
    v = np.maximum(log["vx"], MIN_VX)
    return log["delta"] - log[a_y_source] * wheelbase / (v * v)


def ehd_samples(log: TelemetryLog, wheelbase: float, a_y_source: str = "ay_meas") -> tuple[np.ndarray, ...]:
    """(a_y, v_x, delta_dev) handling-diagram samples from a telemetry log."""
    return log[a_y_source].copy(), log["vx"].copy(), steering_deviation(log, wheelbase, a_y_source)


def estimate_steering_lead(log: TelemetryLog, dt: float, max_steps: int = 20) -> int:
    """Controller steps by which the measured road-wheel angle trails the command.

    Peak of the cross-correlation between the issued command (feedforward
    plus feedback) and the measured angle; never negative.
    """
    cmd = log["delta_ff"] + log["delta_fb"]
    lag = xcorr_lag(cmd, log["delta"], dt, max_steps * dt).lag
    return max(0, int(round(lag / dt)))
