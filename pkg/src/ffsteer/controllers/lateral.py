"""Feedback steering, the acceleration target generator, and the speed controller."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ffsteer.planner import Trajectory


@dataclass(frozen=True)
class FeedbackGains:
    """PD on lateral error plus heading and lateral-acceleration terms.

    Output is saturated at ``limit`` so the feedforward dominates.
    """

    kp: float = 0.01
    kd: float = 0.004
    k_heading: float = 0.08
    k_ay: float = 0.0
    limit: float = 0.05
    enabled: bool = True

    def __post_init__(self) -> None:
        for name in ("kp", "kd", "k_heading", "k_ay", "limit"):
            v = getattr(self, name)
            if not (v >= 0.0 and v < float("inf")):
                raise ValueError(f"feedback gain {name} must be finite and >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def feedback_steer(
    lateral_error: float,
    heading_error: float,
    a_y_error: float,
    gains: FeedbackGains,
    dt: float,
    state: dict,
) -> float:
    """Corrective steering angle [rad].

    Errors follow the left-positive convention, so a vehicle left of the path
    (positive lateral error) gets a negative, rightward correction.
    ``a_y_error`` is target minus measured lateral acceleration. ``state``
    stores the previous lateral error for the derivative term.
    """
    prev = state.get("e_prev")
    state["e_prev"] = lateral_error
    if not gains.enabled:
        return 0.0
    e_dot = 0.0 if prev is None else (lateral_error - prev) / dt
    u = -(gains.kp * lateral_error + gains.kd * e_dot + gains.k_heading * heading_error) + gains.k_ay * a_y_error
    return min(max(u, -gains.limit), gains.limit)


@dataclass(frozen=True)
class TargetGains:
    """Gains of the acceleration target generator (the slow outer correction).

    ``k_e`` [1/s^2] maps lateral error to lateral acceleration, ``k_psi``
    [1/s] maps heading error times speed, ``k_v`` [1/s] maps speed error to
    longitudinal acceleration.
    """

    k_e: float = 3.0
    k_psi: float = 3.0
    k_v: float = 1.0
    preview_time: float = 0.05

    def to_dict(self) -> dict:
        return asdict(self)


def target_generator(
    lateral_error: float,
    heading_error: float,
    traj: Trajectory,
    s_now: float,
    v_now: float,
    gains: TargetGains,
) -> tuple[float, float]:
    """Lateral and longitudinal acceleration targets (a_y, a_x).

    The lateral target is previewed curvature times v^2 plus corrections
    steering back toward the path, clipped to the nominal (unscaled) lateral
    limit so corrections stay available when the plan already sits on the
    scaled limit. The longitudinal target tracks the speed profile and is
    limited by what the scaled friction ellipse leaves over at the planned
    lateral acceleration of the current position.
    """
    kappa = float(traj.at("curvature", s_now + v_now * gains.preview_time))
    a_y = kappa * v_now * v_now - gains.k_e * lateral_error - gains.k_psi * heading_error * v_now
    lim = traj.limits
    a_y = min(max(a_y, -lim.a_y_max), lim.a_y_max)
    v_ref = float(traj.at("v", s_now))
    a_x = float(traj.at("a_x", s_now)) + gains.k_v * (v_ref - v_now)
    rem = lim.ellipse_remainder(float(traj.at("a_y", s_now)))
    a_x = min(max(a_x, -lim.brake * rem), lim.drive * rem)
    return a_y, a_x


@dataclass(frozen=True)
class SpeedParams:
    mass: float = 750.0
    drag_coeff: float = 0.6
    kp: float = 300.0
    max_drive_force: float = 10000.0
    max_brake_force: float = 20000.0

    @classmethod
    def from_vehicle(cls, vp, kp: float = 300.0) -> "SpeedParams":
        return cls(vp.mass, vp.drag_coeff, kp, vp.max_drive_force, vp.max_brake_force)

    def to_dict(self) -> dict:
        return asdict(self)


def speed_controller(v_now: float, a_x_target: float, params: SpeedParams, v_target: float | None = None) -> float:
    """Drive (positive) or brake (negative) force [N]."""
    f = params.mass * a_x_target + params.drag_coeff * v_now * abs(v_now)
    if v_target is not None:
        f += params.kp * (v_target - v_now)
    return min(max(f, -params.max_brake_force), params.max_drive_force)
