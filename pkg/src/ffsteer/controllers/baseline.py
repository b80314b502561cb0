"""Empirical baseline feedforward: kinematic angle plus filtered linear terms."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from ffsteer.controllers.base import FeedforwardController, FfInput, MIN_VX


@dataclass(frozen=True)
class BaselineParams:
    """Gains of the baseline feedforward.

    ``k_long_pos`` applies when the measured longitudinal acceleration is
    non-negative, ``k_long_neg`` otherwise. A time constant of 0 disables
    the corresponding low-pass filter. The defaults are the result of
    :func:`ffsteer.harness.tuning.tune_baseline` on the default plant and
    track, frozen here.
    """

    k_ug: float = 6.80e-4
    k_long_pos: float = 7.96e-5
    k_long_neg: float = 2.11e-5
    tau_ug: float = 0.2
    tau_long: float = 0.0

    def __post_init__(self) -> None:
        if self.tau_ug < 0 or self.tau_long < 0:
            raise ValueError("time constants must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def lowpass(y: float, u: float, tau: float, dt: float) -> float:
    """One exponentially discretised first-order low-pass step."""
    if tau <= 0.0:
        return u
    return y + (1.0 - math.exp(-dt / tau)) * (u - y)


def ff_baseline(inp: FfInput, params: BaselineParams, wheelbase: float, dt: float, filter_state: dict) -> float:
    """delta_ack + lowpass(k_ug a_y) + lowpass(k_long a_x a_y).

    ``filter_state`` holds the two filter outputs under ``"ug"`` and
    ``"long"`` and is updated in place.
    """
    v = max(inp.v_x, MIN_VX)
    a_y = inp.a_y_target
    a_x = inp.a_x_actual
    d_ack = a_y * wheelbase / (v * v)
    d_ug = params.k_ug * a_y
    k_long = params.k_long_pos if a_x >= 0.0 else params.k_long_neg
    d_long = k_long * a_x * a_y
    ug = lowpass(filter_state.get("ug", 0.0), d_ug, params.tau_ug, dt)
    lg = lowpass(filter_state.get("long", 0.0), d_long, params.tau_long, dt)
    filter_state["ug"] = ug
    filter_state["long"] = lg
    return d_ack + ug + lg


class BaselineFF(FeedforwardController):
    name = "baseline"

    def __init__(self, params: BaselineParams, wheelbase: float):
        self.params = params
        self.wheelbase = wheelbase
        self.state: dict = {}

    def reset(self) -> None:
        self.state = {}

    def command(self, inp: FfInput, dt: float) -> float:
        return ff_baseline(inp, self.params, self.wheelbase, dt, self.state)
