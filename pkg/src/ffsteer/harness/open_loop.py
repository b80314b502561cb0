"""Open-loop prediction of the logged steering angle by each feedforward."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ffsteer.controllers.base import MIN_VX, FeedforwardController
from ffsteer.harness.telemetry import TelemetryLog
from ffsteer.metrics import (
    DEFAULT_RHO_MIN,
    MetricSet,
    compute_metrics,
    cornering_mask,
    direction_normalized_error,
)

AX_BIN_EDGES = np.arange(-25.0, 12.5 + 1e-9, 2.5)


@dataclass
class OpenLoopResult:
    name: str
    prediction: np.ndarray = field(repr=False)
    full: MetricSet
    cornering: MetricSet
    ax_bin_edges: np.ndarray = field(repr=False)
    ax_bin_mean: np.ndarray = field(repr=False)
    ax_bin_count: np.ndarray = field(repr=False)

    def row(self) -> dict:
        return {
            "model": self.name,
            "rmse": self.full.rmse,
            "mae": self.full.mae,
            "fvu": self.full.fvu,
            "n": self.full.n,
            "rmse_corner": self.cornering.rmse,
            "mae_corner": self.cornering.mae,
            "fvu_corner": self.cornering.fvu,
            "n_corner": self.cornering.n,
        }


def kinematic_curvature(log: TelemetryLog) -> np.ndarray:
    v = np.maximum(log["vx"], MIN_VX)
    return log["ay_target"] / (v * v)


def binned_mean(x: np.ndarray, y: np.ndarray, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean of ``y`` per bin of ``x``; empty bins give nan."""
    idx = np.digitize(x, edges) - 1
    nb = len(edges) - 1
    ok = (idx >= 0) & (idx < nb)
    count = np.bincount(idx[ok], minlength=nb)
    total = np.bincount(idx[ok], weights=y[ok], minlength=nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return mean, count


def evaluate_prediction(
    name: str,
    prediction: np.ndarray,
    log: TelemetryLog,
    rho_min: float = DEFAULT_RHO_MIN,
    edges: np.ndarray = AX_BIN_EDGES,
) -> OpenLoopResult:
    """Score a predicted steering series against the logged road-wheel angle."""
    delta = log["delta"]
    corner = cornering_mask(kinematic_curvature(log), rho_min)
    err = direction_normalized_error(prediction[corner], delta[corner])
    mean, count = binned_mean(log["ax_meas"][corner], err, edges)
    return OpenLoopResult(
        name=name,
        prediction=prediction,
        full=compute_metrics(delta, prediction),
        cornering=compute_metrics(delta[corner], prediction[corner]),
        ax_bin_edges=edges,
        ax_bin_mean=mean,
        ax_bin_count=count,
    )


def eval_open_loop(
    controllers: dict[str, FeedforwardController],
    test_log: TelemetryLog,
    horizons: np.ndarray | None,
    dt: float,
    rho_min: float = DEFAULT_RHO_MIN,
) -> dict[str, OpenLoopResult]:
    """Replay the test log through every controller from a fresh state.

    Each controller receives the logged targets, measured longitudinal
    acceleration and reconstructed horizon, exactly as it would online.
    """
    out = {}
    for name in sorted(controllers):
        ff = controllers[name]
        pred = ff.predict_series(test_log["ay_target"], test_log["vx"], test_log["ax_meas"], horizons, dt)
        out[name] = evaluate_prediction(name, pred, test_log, rho_min)
    return out


def write_metrics_csv(results: dict[str, OpenLoopResult], path: str | Path) -> None:
    rows = [results[k].row() for k in sorted(results)]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})


def write_ax_bins_csv(results: dict[str, OpenLoopResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "ax_lo", "ax_hi", "mean_normalized_error", "count"])
        for name in sorted(results):
            r = results[name]
            for lo, hi, m, c in zip(r.ax_bin_edges[:-1], r.ax_bin_edges[1:], r.ax_bin_mean, r.ax_bin_count):
                w.writerow([name, repr(float(lo)), repr(float(hi)), repr(float(m)), int(c)])
