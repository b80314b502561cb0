"""GG-scale sweeps to failure, per controller."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ffsteer.controllers.base import FeedforwardController
from ffsteer.harness.closed_loop import RunReport
from ffsteer.harness.collect import TrajectoryCache
from ffsteer.harness.config import RunConfig
from ffsteer.harness.runner import eval_closed_loop

SUMMARY_FIELDS = (
    "controller", "gg_scale", "gg_relative", "failed", "cause", "lap_time", "max_abs_lateral_error",
    "lat_rmse", "lat_mae", "v_rmse", "v_mae", "ay_rmse", "ay_mae", "lateral_jerk_rms",
)


def parse_grid(text: str) -> list[float]:
    """``"0.5:0.95:0.05"`` (inclusive range) or ``"0.5,0.7,0.9"``."""
    if ":" in text:
        lo, hi, step = (float(p) for p in text.split(":"))
        if step <= 0 or hi < lo:
            raise ValueError(f"bad grid range {text!r}")
        n = int(round((hi - lo) / step))
        return [round(lo + k * step, 9) for k in range(n + 1)]
    return sorted(float(p) for p in text.split(",") if p.strip())


@dataclass
class SweepResult:
    reports: dict[str, list[RunReport]] = field(default_factory=dict)

    def max_achieved(self) -> dict[str, float | None]:
        out = {}
        for name, reps in self.reports.items():
            ok = [r.gg_scale for r in reps if not r.failed]
            out[name] = max(ok) if ok else None
        return out

    def reference_gg(self) -> float | None:
        """Highest GG completed by any controller; the relative scale divides by it."""
        vals = [v for v in self.max_achieved().values() if v is not None]
        return max(vals) if vals else None

    def summary(self) -> list[dict]:
        ref = self.reference_gg()
        rows = []
        for name in sorted(self.reports):
            for r in self.reports[name]:
                def m(ms, attr):
                    return None if ms is None else getattr(ms, attr)

                rows.append({
                    "controller": name,
                    "gg_scale": r.gg_scale,
                    "gg_relative": None if ref is None else r.gg_scale / ref,
                    "failed": r.failed,
                    "cause": r.cause,
                    "lap_time": r.lap_time if r.lap_times else None,
                    "max_abs_lateral_error": r.max_abs_lateral_error,
                    "lat_rmse": m(r.lateral_error, "rmse"),
                    "lat_mae": m(r.lateral_error, "mae"),
                    "v_rmse": m(r.velocity_error, "rmse"),
                    "v_mae": m(r.velocity_error, "mae"),
                    "ay_rmse": m(r.ay_error, "rmse"),
                    "ay_mae": m(r.ay_error, "mae"),
                    "lateral_jerk_rms": r.lateral_jerk_rms,
                })
        return rows

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = self.summary()
        with open(out / "sweep_summary.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
            w.writeheader()
            for r in rows:
                w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        with open(out / "sweep_reports.json", "w") as fh:
            json.dump({k: [r.to_dict() for r in v] for k, v in sorted(self.reports.items())}, fh, indent=1)
        for name, reps in self.reports.items():
            for r in reps:
                if r.telemetry is not None:
                    r.telemetry.to_csv(out / f"telemetry_{name}_gg{r.gg_scale:.3f}.csv")


def sweep_controller(cfg: RunConfig, name: str, ff: FeedforwardController, grid: list[float]) -> list[RunReport]:
    """Run the grid in ascending order and stop after the first failure."""
    if list(grid) != sorted(grid):
        raise ValueError("grid must be sorted ascending")
    track = cfg.build_track()
    plans = TrajectoryCache(cfg, track)
    reports = []
    for gg in grid:
        rep = eval_closed_loop(cfg, ff, name, track, plans, gg)
        reports.append(rep)
        if rep.failed:
            break
    return reports


def _sweep_job(args):
    return sweep_controller(*args)


def gg_sweep(
    cfg: RunConfig,
    controllers: dict[str, FeedforwardController],
    grid: list[float],
    jobs: int = 1,
) -> SweepResult:
    """Sweep every controller; with ``jobs > 1`` controllers run in separate processes.

    Each controller's sweep is sequential, and every run builds its own
    plant, so the result does not depend on ``jobs``.
    """
    names = sorted(controllers)
    work = [(cfg, n, controllers[n], list(grid)) for n in names]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as ex:
            results = list(ex.map(_sweep_job, work))
    else:
        results = [_sweep_job(w) for w in work]
    return SweepResult(dict(zip(names, results)))
