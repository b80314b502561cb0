"""Friction-ellipse velocity planner and horizon sampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ffsteer.errors import InfeasibleTrack
from ffsteer.track import Track

MIN_SPEED = 1.0


@dataclass(frozen=True)
class GgLimits:
    """Nominal acceleration limits and the GG scale applied to all of them."""

    a_x_max_drive: float = 10.0
    a_x_max_brake: float = 25.0
    a_y_max: float = 25.0
    gg_scale: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.gg_scale <= 1.2):
            raise ValueError("gg_scale must be in (0, 1.2]")
        if min(self.a_x_max_drive, self.a_x_max_brake, self.a_y_max) <= 0:
            raise ValueError("acceleration limits must be positive")

    @property
    def drive(self) -> float:
        return self.gg_scale * self.a_x_max_drive

    @property
    def brake(self) -> float:
        return self.gg_scale * self.a_x_max_brake

    @property
    def lateral(self) -> float:
        return self.gg_scale * self.a_y_max

    def scaled(self, gg_scale: float) -> "GgLimits":
        return GgLimits(self.a_x_max_drive, self.a_x_max_brake, self.a_y_max, gg_scale)

    def ellipse_remainder(self, a_y: float) -> float:
        """Fraction of longitudinal capacity left at lateral acceleration ``a_y``."""
        u = min(abs(a_y) / self.lateral, 1.0)
        return math.sqrt(1.0 - u * u)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Speed and acceleration targets on the track samples."""

    track: Track
    limits: GgLimits
    v_cap: float
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    curvature: np.ndarray
    v: np.ndarray
    a_x: np.ndarray
    a_y: np.ndarray

    def __post_init__(self) -> None:
        L = self.track.total_length
        ext = {
            "s": np.append(self.s, L),
            "v": np.append(self.v, self.v[0]),
            "a_x": np.append(self.a_x, self.a_x[0]),
            "a_y": np.append(self.a_y, self.a_y[0]),
            "curvature": np.append(self.curvature, self.curvature[0]),
        }
        object.__setattr__(self, "_ext", ext)

    def __len__(self) -> int:
        return len(self.s)

    @property
    def total_length(self) -> float:
        return self.track.total_length

    def at(self, key: str, s):
        s = np.mod(s, self.total_length) if isinstance(s, np.ndarray) else s % self.total_length
        return np.interp(s, self._ext["s"], self._ext[key])

    def lap_time(self) -> float:
        """Integral of ds / v around the lap (trapezoid)."""
        v = self._ext["v"]
        ds = np.diff(self._ext["s"])
        return float(np.sum(2.0 * ds / (v[:-1] + v[1:])))

    def ellipse_usage(self) -> np.ndarray:
        ax_lim = np.where(self.a_x >= 0.0, self.limits.drive, self.limits.brake)
        return np.sqrt((self.a_x / ax_lim) ** 2 + (self.a_y / self.limits.lateral) ** 2)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "x", "y", "curvature", "v", "ax", "ay"])
            for row in zip(self.s, self.x, self.y, self.curvature, self.v, self.a_x, self.a_y):
                w.writerow([repr(float(c)) for c in row])


def _max_entry_speed_sq(v_next_sq: float, kappa: float, brake: float, lateral: float, ds: float, u_hi: float) -> float:
    """Largest v_i^2 <= u_hi that can brake to v_next_sq over ds.

    Braking capacity is evaluated at sample i itself, so the stored
    deceleration respects the ellipse there.
    """

    def reach(u: float) -> float:
        q = min(abs(kappa) * u / lateral, 1.0)
        return u - 2.0 * ds * brake * math.sqrt(1.0 - q * q)

    if reach(u_hi) <= v_next_sq:
        return u_hi
    lo, hi = 0.0, u_hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if reach(mid) <= v_next_sq:
            lo = mid
        else:
            hi = mid
    return lo


def plan_velocity(track: Track, limits: GgLimits, v_cap: float = 80.0) -> Trajectory:
    """Three-pass speed profile on a closed track.

    (1) curvature-limited speed capped at ``v_cap``, (2) forward pass with
    the drive limit reduced by the ellipse remainder, (3) backward pass with
    the brake limit likewise. Passes wrap around the lap and repeat until
    nothing changes (at most three times).

    Raises:
        InfeasibleTrack: if any curvature sample forces v < 1 m/s.
    """
    if not track.closed:
        raise ValueError("plan_velocity needs a closed track")
    kappa = np.asarray(track.curvature, dtype=float)
    n = len(kappa)
    ds = track.spacing
    a_lat = limits.lateral
    with np.errstate(divide="ignore"):
        v_curv = np.where(np.abs(kappa) > 0.0, np.sqrt(a_lat / np.abs(kappa)), np.inf)
    v_curv = np.minimum(v_curv, v_cap)
    if np.any(v_curv < MIN_SPEED):
        raise InfeasibleTrack(f"curvature {np.max(np.abs(kappa)):.3f} 1/m forces v < {MIN_SPEED} m/s")
    u_curv = v_curv**2
    u = u_curv.copy()
    start = int(np.argmin(v_curv))
    for _ in range(3):
        before = u.copy()
        # forward
        for j in range(n):
            i = (start + j) % n
            k = (i + 1) % n
            q = min(abs(kappa[i]) * u[i] / a_lat, 1.0)
            u_reach = u[i] + 2.0 * ds * limits.drive * math.sqrt(1.0 - q * q)
            if u[k] > u_reach:
                u[k] = u_reach
        # backward
        for j in range(n):
            k = (start - j) % n
            i = (k - 1) % n
            if u[i] > u[k]:
                u[i] = _max_entry_speed_sq(u[k], kappa[i], limits.brake, a_lat, ds, u[i])
        if np.array_equal(before, u):
            break
    v = np.sqrt(u)
    u_next = np.roll(u, -1)
    a_x = (u_next - u) / (2.0 * ds)
    a_y = kappa * u
    return Trajectory(
        track=track,
        limits=limits,
        v_cap=v_cap,
        s=np.array(track.s),
        x=np.array(track.x),
        y=np.array(track.y),
        curvature=kappa.copy(),
        v=v,
        a_x=a_x,
        a_y=a_y,
    )


def sample_horizon(traj: Trajectory, s_now: float, n: int, dt: float) -> np.ndarray:
    """``n`` (v_x, a_x, a_y) triples walking forward in time from ``s_now``.

    Arc length advances by ``ds = v_traj * dt``; samples are linearly
    interpolated and wrap around the closed track. Row 0 is the
    interpolation at ``s_now``.
    """
    return sample_horizon_batch(traj, np.array([float(s_now)]), n, dt)[0]


def sample_horizon_batch(traj: Trajectory, s_now: np.ndarray, n: int, dt: float) -> np.ndarray:
    """Vectorised :func:`sample_horizon`; returns shape (len(s_now), n, 3)."""
    if n < 1 or dt <= 0:
        raise ValueError("need n >= 1 and dt > 0")
    ext = traj._ext
    L = traj.total_length
    xs = ext["s"]
    s = np.mod(np.asarray(s_now, dtype=float), L)
    out = np.empty((len(s), n, 3))
    for k in range(n):
        v = np.interp(s, xs, ext["v"])
        out[:, k, 0] = v
        out[:, k, 1] = np.interp(s, xs, ext["a_x"])
        out[:, k, 2] = np.interp(s, xs, ext["a_y"])
        s = np.mod(s + v * dt, L)
    return out


def target_horizon(
    traj: Trajectory,
    s_now,
    v_now,
    a_y_target,
    a_x_target,
    n: int,
    dt: float,
    preview_time: float,
) -> np.ndarray:
    """Horizon fed to the learned controllers, shape (M, n, 3).

    The planned horizon starts at the previewed position; velocity and
    lateral acceleration rows are shifted so row 0 equals the current
    speed and the issued lateral target, and row 0 of a_x is the issued
    longitudinal target. Accepts scalars or equal-length arrays.
    """
    s_now = np.atleast_1d(np.asarray(s_now, dtype=float))
    v_now = np.atleast_1d(np.asarray(v_now, dtype=float))
    h = sample_horizon_batch(traj, s_now + v_now * preview_time, n, dt)
    h[:, :, 0] += (v_now - h[:, 0, 0])[:, None]
    h[:, :, 2] += (np.atleast_1d(a_y_target) - h[:, 0, 2])[:, None]
    h[:, 0, 1] = a_x_target
    return h
