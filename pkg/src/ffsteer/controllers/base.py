"""Common feedforward interface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_VX = 1.0


@dataclass
class FfInput:
    """Inputs available to a feedforward steering controller at one step.

    ``horizon`` is an (N, 3) array of (v_x, a_x, a_y) targets; only the
    learned controllers read it.
    """

    a_y_target: float
    v_x: float
    a_x_actual: float = 0.0
    horizon: np.ndarray | None = None

    @property
    def rho(self) -> float:
        """Kinematic path curvature a_y / v_x^2 [1/m]."""
        v = max(self.v_x, MIN_VX)
        return self.a_y_target / (v * v)


def ackermann(a_y: float, v_x: float, wheelbase: float) -> float:
    """Kinematic steering angle a_y l / v_x^2."""
    v = max(v_x, MIN_VX)
    return a_y * wheelbase / (v * v)


class FeedforwardController:
    """Base class: subclasses implement :meth:`command` and may hold filter state."""

    name = "ff"

    def reset(self) -> None:
        pass

    def command(self, inp: FfInput, dt: float) -> float:
        raise NotImplementedError

    def predict_series(self, a_y, v_x, a_x, horizons, dt: float) -> np.ndarray:
        """Replay a logged input sequence from a fresh state.

        ``horizons`` is an (M, N, 3) array or None. Subclasses with a
        vectorised forward pass override this; the result must equal the
        step-by-step :meth:`command` sequence.
        """
        self.reset()
        out = np.empty(len(a_y))
        for i in range(len(a_y)):
            h = None if horizons is None else horizons[i]
            out[i] = self.command(FfInput(float(a_y[i]), float(v_x[i]), float(a_x[i]), h), dt)
        return out


class AckermannFF(FeedforwardController):
    name = "ackermann"

    def __init__(self, wheelbase: float):
        self.wheelbase = wheelbase

    def command(self, inp: FfInput, dt: float) -> float:
        return ackermann(inp.a_y_target, inp.v_x, self.wheelbase)


class ZeroFF(FeedforwardController):
    name = "zero"

    def command(self, inp: FfInput, dt: float) -> float:
        return 0.0
