"""Feedforward controllers backed by a learned steering-deviation model."""

from __future__ import annotations

import numpy as np

from ffsteer.controllers.base import MIN_VX, FeedforwardController, FfInput, ackermann
from ffsteer.learning.model import LearnedModel


class LearnedFF(FeedforwardController):
    """delta = delta_ack + model(horizon, rho); the network only learns the deviation."""

    uses_horizon = True

    def __init__(self, model: LearnedModel, wheelbase: float, name: str | None = None):
        self.model = model
        self.wheelbase = float(wheelbase)
        self.name = name or model.kind

    def command(self, inp: FfInput, dt: float) -> float:
        if inp.horizon is None:
            raise ValueError(f"{self.name} feedforward needs a target horizon")
        dev = self.model.predict(np.asarray(inp.horizon)[None], np.array([inp.rho]))[0]
        return ackermann(inp.a_y_target, inp.v_x, self.wheelbase) + float(dev)

    def predict_series(self, a_y, v_x, a_x, horizons, dt: float) -> np.ndarray:
        # stateless, so the whole log can go through one batched forward pass
        if horizons is None:
            raise ValueError(f"{self.name} feedforward needs target horizons")
        a_y = np.asarray(a_y, dtype=float)
        v = np.maximum(np.asarray(v_x, dtype=float), MIN_VX)
        return a_y * self.wheelbase / (v * v) + self.model.predict(horizons, a_y / (v * v))
