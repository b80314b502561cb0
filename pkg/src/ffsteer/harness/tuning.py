"""Open-loop grid search for the baseline feedforward gains."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

from ffsteer.controllers.base import MIN_VX
from ffsteer.controllers.baseline import BaselineParams
from ffsteer.harness.telemetry import TelemetryLog

TAU_GRID = (0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3)


def _lowpass_series(u: np.ndarray, tau: float, dt: float) -> np.ndarray:
    """Same recursion as :func:`ffsteer.controllers.baseline.lowpass`, zero initial state."""
    if tau <= 0.0:
        return u.copy()
    a = 1.0 - math.exp(-dt / tau)
    return lfilter([a], [1.0, a - 1.0], u)


def tune_baseline(
    log: TelemetryLog,
    wheelbase: float,
    dt: float = 0.01,
    tau_grid=TAU_GRID,
) -> tuple[BaselineParams, float]:
    """Minimise the open-loop steering RMSE of the baseline on a tuning log.

    The two time constants are searched on ``tau_grid``. For fixed time
    constants the prediction is linear in ``(k_ug, k_long_pos, k_long_neg)``
    (the filters are linear and the gains scale their inputs), so those
    three are solved exactly by least squares at each grid point.
    Returns the best parameters and their RMSE.
    """
    a_y = log["ay_target"]
    a_x = log["ax_meas"]
    v = np.maximum(log["vx"], MIN_VX)
    target = log["delta"] - a_y * wheelbase / (v * v)
    u_pos = np.where(a_x >= 0.0, a_x * a_y, 0.0)
    u_neg = np.where(a_x < 0.0, a_x * a_y, 0.0)
    best = None
    for tau_ug in tau_grid:
        f_ug = _lowpass_series(a_y, tau_ug, dt)
        for tau_long in tau_grid:
            X = np.column_stack([f_ug, _lowpass_series(u_pos, tau_long, dt), _lowpass_series(u_neg, tau_long, dt)])
            coef = np.linalg.lstsq(X, target, rcond=None)[0]
            rmse = float(np.sqrt(np.mean((X @ coef - target) ** 2)))
            if best is None or rmse < best[0]:
                best = (rmse, tau_ug, tau_long, coef)
    rmse, tau_ug, tau_long, coef = best
    params = BaselineParams(
        k_ug=float(coef[0]),
        k_long_pos=float(coef[1]),
        k_long_neg=float(coef[2]),
        tau_ug=float(tau_ug),
        tau_long=float(tau_long),
    )
    return params, rmse
