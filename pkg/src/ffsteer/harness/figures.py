"""Figures built from harness artifacts, and the ``report`` plot emitter."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ffsteer.controllers.ehd import EhdFit, EhdSurface
from ffsteer.harness.telemetry import TelemetryLog
from ffsteer.learning.data import CHANNELS
from ffsteer.plots import Heatmap, LinePlot

HD_SPEEDS = (20.0, 35.0, 50.0)
SWEEP_METRICS = (("lat_rmse", "lateral error RMSE [m]"), ("v_rmse", "velocity error RMSE [m/s]"), ("ay_rmse", "a_y error RMSE [m/s^2]"))


def hd_cross_sections(surface: EhdSurface, speeds=HD_SPEEDS, a_max: float = 25.0) -> LinePlot:
    a = np.linspace(0.0, a_max, 51)
    fig = LinePlot("Handling diagram cross-sections", "a_y [m/s^2]", "delta_dev [rad]")
    for v in speeds:
        fig.add(f"v = {v:g} m/s", a, surface.delta_dev(a, v))
    return fig


def ax_bins_plot(rows: list[dict]) -> LinePlot:
    """Mean direction-normalised steering error per a_x bin, one curve per model."""
    fig = LinePlot("Steering error vs longitudinal acceleration", "a_x [m/s^2]", "normalised error [rad]", markers=True)
    for name in sorted({r["model"] for r in rows}):
        mine = [r for r in rows if r["model"] == name]
        x = [(float(r["ax_lo"]) + float(r["ax_hi"])) / 2 for r in mine]
        fig.add(name, x, [float(r["mean_normalized_error"]) for r in mine])
    return fig


def importance_heatmap(rows: list[dict], title: str = "Permutation importance") -> Heatmap:
    steps = sorted({int(r["step"]) for r in rows if r["step"] != ""})
    grid = np.zeros((len(CHANNELS), len(steps)))
    for r in rows:
        if r["feature"] in CHANNELS:
            grid[CHANNELS.index(r["feature"]), steps.index(int(r["step"]))] = float(r["importance"])
    return Heatmap(title, grid, list(CHANNELS), steps)


def sweep_plot(rows: list[dict], metric: str, label: str) -> LinePlot:
    """One curve per controller over the completed GG points, legend ordered by name."""
    fig = LinePlot(f"Closed-loop {label} vs GG scale", "GG scale", label, markers=True)
    for name in sorted({r["controller"] for r in rows}):
        ok = [r for r in rows if r["controller"] == name and str(r["failed"]) in ("False", "false", "0") and r[metric] not in ("", None)]
        fig.add(name, [float(r["gg_scale"]) for r in ok], [float(r[metric]) for r in ok])
    return fig


def laptime_plot(lap_times: dict[str, list[float]]) -> LinePlot:
    fig = LinePlot("Lap time under iterative fine-tuning", "iteration", "lap time [s]", markers=True)
    for name in sorted(lap_times):
        t = lap_times[name]
        fig.add(name, np.arange(len(t)), t)
    return fig


def timeseries_plot(tel: TelemetryLog, title: str = "Closed-loop run") -> LinePlot:
    fig = LinePlot(title, "t [s]", "lateral error [m] / steering [deg]")
    fig.add("lateral error [m]", tel["t"], tel["lat_err"])
    fig.add("steering [deg]", tel["t"], np.degrees(tel["delta"]))
    return fig


def read_csv_rows(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plots(src: str | Path, out: str | Path) -> list[Path]:
    """Write every figure whose source artifact exists in ``src`` to ``out``.

    Returns the written paths; a directory without artifacts yields none.
    """
    src, out = Path(src), Path(out)
    jobs = []
    if (src / "ehd.json").exists():
        jobs.append(("hd_cross_sections.svg", lambda: hd_cross_sections(EhdFit.from_json(src / "ehd.json").surface)))
    if (src / "open_loop_ax_bins.csv").exists():
        jobs.append(("ax_bins.svg", lambda: ax_bins_plot(read_csv_rows(src / "open_loop_ax_bins.csv"))))
    for p in sorted(src.glob("importance_*.csv")):
        jobs.append((p.stem + ".svg", lambda p=p: importance_heatmap(read_csv_rows(p), f"Permutation importance ({p.stem[11:]})")))
    if (src / "sweep_summary.csv").exists():
        rows = read_csv_rows(src / "sweep_summary.csv")
        for key, label in SWEEP_METRICS:
            jobs.append((f"sweep_{key}.svg", lambda key=key, label=label: sweep_plot(rows, key, label)))
    if (src / "finetune.json").exists():
        jobs.append(("lap_time_iterations.svg", lambda: laptime_plot(json.loads((src / "finetune.json").read_text())["lap_times"])))
    if (src / "report.json").exists() and (src / "telemetry.csv").exists():
        jobs.append(("timeseries.svg", lambda: timeseries_plot(TelemetryLog.from_csv(src / "telemetry.csv"))))
    written = []
    if jobs:
        out.mkdir(parents=True, exist_ok=True)
    for name, build in jobs:
        written.append(build().write(out / name))
    return written
