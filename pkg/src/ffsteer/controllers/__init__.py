"""Feedforward, feedback and longitudinal controllers."""

from ffsteer.controllers.base import AckermannFF, FeedforwardController, FfInput, ZeroFF, ackermann
from ffsteer.controllers.baseline import BaselineFF, BaselineParams, ff_baseline, lowpass
from ffsteer.controllers.ehd import EhdFF, EhdFit, EhdSurface, ff_ehd, fit_constant_gradient, fit_ehd
from ffsteer.controllers.lateral import (
    FeedbackGains,
    SpeedParams,
    TargetGains,
    feedback_steer,
    speed_controller,
    target_generator,
)

__all__ = [
    "AckermannFF", "BaselineFF", "BaselineParams", "EhdFF", "EhdFit", "EhdSurface", "FeedbackGains",
    "FeedforwardController", "FfInput", "SpeedParams", "TargetGains", "ZeroFF", "ackermann",
    "feedback_steer", "ff_baseline", "ff_ehd", "fit_constant_gradient", "fit_ehd", "lowpass",
    "speed_controller", "target_generator",
]
