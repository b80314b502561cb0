"""Command-line front end: ``ffsteer <command> [options]``.

Every command writes only below ``--out`` (default ``$FFSTEER_OUT`` or
``run``) and first echoes its fully resolved configuration there as
``config.json``. Passing that file back with ``--config`` repeats the run.

Exit codes: 0 success, 1 invalid input, 2 runtime failure (including a
failed closed-loop run when ``--strict`` is set).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from ffsteer.errors import FfSteerError

COMMANDS = (
    "track-build", "collect", "fit-ehd", "train", "eval-open",
    "eval-closed", "sweep", "finetune", "report", "importance",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# argument parsing


def _run_flags(p: argparse.ArgumentParser, gg: bool = True) -> None:
    """Flags that override fields of the run configuration; None means 'not given'."""
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="RunConfig JSON or a config.json echoed by a previous command")
    g.add_argument("--out", help="output directory (default: $FFSTEER_OUT or ./run)")
    g.add_argument("--track-file", dest="track_file", default=None)
    g.add_argument("--vehicle-file", dest="vehicle_file", default=None)
    if gg:
        g.add_argument("--gg", dest="gg_scale", type=float, default=None, help="GG scale")
    g.add_argument("--laps", dest="n_laps", type=int, default=None)
    g.add_argument("--warmup", dest="warmup_laps", type=int, default=None)
    g.add_argument("--feedback", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--plant-dt", dest="plant_dt", type=float, default=None)
    g.add_argument("--substeps", type=int, default=None)
    g.add_argument("--horizon-n", dest="horizon_n", type=int, default=None)
    for name in ("ehd", "lstm", "msnn"):
        g.add_argument(f"--{name}", dest=f"param_{name}", default=None, help=f"{name} parameter file")


RUN_KEYS = ("track_file", "vehicle_file", "gg_scale", "n_laps", "warmup_laps", "feedback", "seed", "plant_dt", "substeps", "horizon_n")


def build_parser() -> _Parser:
    parser = _Parser(prog="ffsteer", description="Feedforward steering benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    cmds = {}

    p = cmds["track-build"] = sub.add_parser("track-build", help="build the track and its velocity plan")
    _run_flags(p)

    p = cmds["collect"] = sub.add_parser("collect", help="drive the GG ramp with the baseline and log telemetry")
    _run_flags(p)
    p.add_argument("--schedule", default=None, help="comma-separated GG scales (default: 26-lap ramp plus test lap)")

    p = cmds["fit-ehd"] = sub.add_parser("fit-ehd", help="fit the extended handling diagram")
    _run_flags(p)
    p.add_argument("--telemetry", required=True)
    p.add_argument("--test-lap", default="last", help="lap excluded from fitting: id, 'lapN' or 'last'")
    p.add_argument("--min-ay", dest="min_ay", type=float, default=1.0)

    p = cmds["train"] = sub.add_parser("train", help="train a learned feedforward model")
    _run_flags(p)
    p.add_argument("--telemetry", required=True)
    p.add_argument("--model", choices=("lstm", "msnn"), required=True)
    p.add_argument("--test-lap", default="last")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=25)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--mirror", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--lead", type=int, default=None, help="steering target alignment in steps (default: estimated)")

    p = cmds["eval-open"] = sub.add_parser("eval-open", help="open-loop steering prediction on the test lap")
    _run_flags(p)
    p.add_argument("--telemetry", required=True)
    p.add_argument("--models", default="baseline,ehd,msnn,lstm")
    p.add_argument("--test-lap", default="last")
    p.add_argument("--rho-min", dest="rho_min", type=float, default=None)

    p = cmds["eval-closed"] = sub.add_parser("eval-closed", help="closed-loop laps at one GG scale")
    _run_flags(p)
    p.add_argument("--controller", default=None, choices=("baseline", "ehd", "msnn", "lstm"))
    p.add_argument("--strict", action="store_true", help="exit 2 if the run fails")

    p = cmds["sweep"] = sub.add_parser("sweep", help="GG sweep to failure per controller")
    _run_flags(p, gg=False)
    p.add_argument("--controllers", default="all")
    p.add_argument("--gg", "--grid", dest="grid", default="0.5:0.95:0.05", help="GG grid: lo:hi:step or comma list")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--strict", action="store_true")

    p = cmds["finetune"] = sub.add_parser("finetune", help="iterative deploy-and-retrain loop")
    _run_flags(p)
    p.add_argument("--controllers", default="all")
    p.add_argument("--telemetry", default=None, help="collection log; required when EHD takes part")
    p.add_argument("--test-lap", default="last")
    p.add_argument("--iters", type=int, default=4)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lead", type=int, default=None)

    p = cmds["report"] = sub.add_parser("report", help="emit SVG figures from existing artifacts")
    _run_flags(p)
    p.add_argument("--in", dest="src", required=True)

    p = cmds["importance"] = sub.add_parser("importance", help="permutation importance of a learned model")
    _run_flags(p)
    p.add_argument("--telemetry", required=True)
    p.add_argument("--model", choices=("lstm", "msnn"), required=True)
    p.add_argument("--test-lap", default="last")
    p.add_argument("--n-samples", dest="n_samples", type=int, default=1000)

    parser._cmds = cmds
    return parser


def _load_config_file(path: str) -> tuple[dict, dict, str | None]:
    d = json.loads(Path(path).read_text())
    if "run" in d:
        return d["run"], d.get("options", {}), d.get("command")
    return d, {}, None


def resolve(argv: list[str]):
    """Parse ``argv`` into (command, RunConfig, options dict)."""
    from ffsteer.harness.config import RunConfig

    parser = build_parser()
    args = parser.parse_args(argv)
    run_dict, options = {}, {}
    if args.config:
        run_dict, options, cmd = _load_config_file(args.config)
        if options and cmd == args.command:
            # echoed options become defaults; explicit flags still win
            sub = parser._cmds[args.command]
            sub.set_defaults(**options)
            args = parser.parse_args(argv)
    run = dict(run_dict)
    for k in RUN_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            run[k] = v
    files = dict(run.get("param_files", {}))
    for name in ("ehd", "lstm", "msnn"):
        v = getattr(args, f"param_{name}")
        if v is not None:
            files[name] = v
    run["param_files"] = files
    if getattr(args, "controller", None):
        run["controller"] = args.controller
    out = args.out or options.get("out") or run.get("out") or os.environ.get("FFSTEER_OUT", "run")
    run["out"] = out
    cfg = RunConfig.from_dict(run)
    skip = set(RUN_KEYS) | {"config", "out", "command", "controller"} | {f"param_{n}" for n in ("ehd", "lstm", "msnn")}
    opts = {k: v for k, v in vars(args).items() if k not in skip}
    opts["out"] = out
    return args.command, cfg, opts


# --------------------------------------------------------------------------
# helpers


def _parse_lap(text: str, log) -> int:
    if text == "last":
        return int(log["lap_id"].max())
    text = text[3:] if text.startswith("lap") else text
    try:
        return int(text)
    except ValueError as exc:
        raise ValueError(f"bad lap id {text!r}") from exc


def _split_log(log, test_lap: int):
    train = log.select(log["lap_id"] != test_lap)
    test = log.select(log["lap_id"] == test_lap)
    if len(test) == 0:
        raise ValueError(f"test lap {test_lap} not in telemetry")
    if len(train) == 0:
        raise ValueError("no training laps left after removing the test lap")
    return train, test


def _controllers(spec: str, cfg) -> dict:
    from ffsteer.harness.config import CONTROLLERS
    from ffsteer.harness.runner import build_controller

    names = list(CONTROLLERS) if spec == "all" else [s.strip() for s in spec.split(",") if s.strip()]
    wheelbase = cfg.build_vehicle().wheelbase
    return {n: build_controller(n, cfg, wheelbase) for n in names}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


# --------------------------------------------------------------------------
# commands


def cmd_track_build(cfg, opts, out: Path) -> int:
    track = cfg.build_track()
    track.to_csv(out / "track.csv")
    traj = cfg.plan(track)
    traj.to_csv(out / "trajectory.csv")
    _write_json(out / "track.json", {"length": track.total_length, "points": len(track), "planned_lap_time": traj.lap_time()})
    print(f"track: {track.total_length:.1f} m, planned lap {traj.lap_time():.3f} s at gg {cfg.gg_scale}")
    return 0


def cmd_collect(cfg, opts, out: Path) -> int:
    from ffsteer.controllers.baseline import BaselineFF
    from ffsteer.harness.collect import collect_dataset, default_schedule, estimate_steering_lead

    if opts["schedule"]:
        schedule = [float(g) for g in opts["schedule"].split(",")]
        test_lap = len(schedule) - 1
    else:
        schedule, test_lap = default_schedule()
    ff = BaselineFF(cfg.baseline_params(), cfg.build_vehicle().wheelbase)
    log = collect_dataset(cfg, ff, schedule)
    log.to_csv(out / "telemetry.csv")
    lead = estimate_steering_lead(log, cfg.sim_settings().control_dt)
    _write_json(out / "collect.json", {"schedule": schedule, "test_lap": test_lap, "rows": len(log), "steering_lead": lead, "digest": log.digest()})
    print(f"collected {len(log)} rows over {len(schedule)} laps; test lap {test_lap}")
    return 0


def cmd_fit_ehd(cfg, opts, out: Path) -> int:
    from ffsteer.controllers.ehd import fit_ehd
    from ffsteer.harness.collect import ehd_samples
    from ffsteer.harness.figures import hd_cross_sections
    from ffsteer.harness.telemetry import TelemetryLog

    log = TelemetryLog.from_csv(opts["telemetry"])
    train, _ = _split_log(log, _parse_lap(opts["test_lap"], log))
    fit = fit_ehd(*ehd_samples(train, cfg.build_vehicle().wheelbase, "ay_target"), min_ay=opts["min_ay"])
    fit.to_json(out / "ehd.json")
    hd_cross_sections(fit.surface).write(out / "hd_cross_sections.svg")
    print(f"ehd: {fit.surface}  residual {fit.residual_rms:.3e} rad over {fit.n_samples} samples")
    return 0


def _dataset(cfg, log, lead: int):
    from ffsteer.harness.collect import TrajectoryCache, rebuild_horizons
    from ffsteer.learning.data import Dataset

    track = cfg.build_track()
    h = rebuild_horizons(log, TrajectoryCache(cfg, track), cfg)
    return Dataset.from_log(log, h, cfg.build_vehicle().wheelbase, lead), h


def cmd_train(cfg, opts, out: Path) -> int:
    from ffsteer.harness.collect import estimate_steering_lead
    from ffsteer.harness.telemetry import TelemetryLog
    from ffsteer.learning.train import TrainConfig, build_and_train

    log = TelemetryLog.from_csv(opts["telemetry"])
    test_lap = _parse_lap(opts["test_lap"], log)
    lead = opts["lead"] if opts["lead"] is not None else estimate_steering_lead(log, cfg.sim_settings().control_dt)
    data, _ = _dataset(cfg, log, lead)
    data = data.select(data.lap_id != test_lap)
    tc = TrainConfig(
        lr=opts["lr"], batch_size=opts["batch"], epochs=opts["epochs"], patience=opts["patience"],
        seed=cfg.seed, stride=opts["stride"], mirror=opts["mirror"],
    )
    model, hist = build_and_train(opts["model"], data, tc)
    model.to_json(out / f"{opts['model']}.json")
    _write_json(out / f"{opts['model']}_history.json", {"lead": lead, "train": tc.to_dict(), **hist.to_dict()})
    print(f"{opts['model']}: best validation loss {hist.best_val:.4e} at epoch {hist.best_epoch} (lead {lead})")
    return 0


def cmd_eval_open(cfg, opts, out: Path) -> int:
    from ffsteer.harness.figures import ax_bins_plot, read_csv_rows
    from ffsteer.harness.open_loop import eval_open_loop, write_ax_bins_csv, write_metrics_csv
    from ffsteer.harness.telemetry import TelemetryLog
    from ffsteer.metrics import DEFAULT_RHO_MIN

    log = TelemetryLog.from_csv(opts["telemetry"])
    test_lap = _parse_lap(opts["test_lap"], log)
    _, test = _split_log(log, test_lap)
    ctrls = _controllers(opts["models"], cfg)
    horizons = None
    if any(getattr(c, "uses_horizon", False) for c in ctrls.values()):
        _, h = _dataset(cfg, log, 0)
        horizons = h[log["lap_id"] == test_lap]
    rho_min = opts["rho_min"] if opts["rho_min"] is not None else DEFAULT_RHO_MIN
    res = eval_open_loop(ctrls, test, horizons, cfg.sim_settings().control_dt, rho_min)
    write_metrics_csv(res, out / "open_loop_metrics.csv")
    write_ax_bins_csv(res, out / "open_loop_ax_bins.csv")
    ax_bins_plot(read_csv_rows(out / "open_loop_ax_bins.csv")).write(out / "ax_bins.svg")
    for name, r in res.items():
        print(f"{name:10s} rmse {r.full.rmse:.6f}  mae {r.full.mae:.6f}  fvu {r.full.fvu:.5f}")
    return 0


def cmd_eval_closed(cfg, opts, out: Path) -> int:
    from ffsteer.harness.figures import timeseries_plot
    from ffsteer.harness.runner import eval_closed_loop

    rep = eval_closed_loop(cfg)
    rep.telemetry_file = "telemetry.csv"
    rep.telemetry.to_csv(out / "telemetry.csv")
    _write_json(out / "report.json", rep.to_dict())
    timeseries_plot(rep.telemetry, f"{cfg.controller} at gg {cfg.gg_scale}").write(out / "timeseries.svg")
    status = f"FAILED ({rep.cause})" if rep.failed else f"lap {rep.lap_time:.3f} s"
    print(f"{cfg.controller} gg {cfg.gg_scale}: {status}, max |e| {rep.max_abs_lateral_error:.3f} m")
    return 2 if rep.failed and opts["strict"] else 0


def cmd_sweep(cfg, opts, out: Path) -> int:
    from ffsteer.harness.figures import SWEEP_METRICS, read_csv_rows, sweep_plot
    from ffsteer.harness.sweep import gg_sweep, parse_grid

    grid = parse_grid(opts["grid"])
    res = gg_sweep(cfg, _controllers(opts["controllers"], cfg), grid, jobs=opts["jobs"])
    res.write(out)
    rows = read_csv_rows(out / "sweep_summary.csv")
    for key, label in SWEEP_METRICS:
        sweep_plot(rows, key, label).write(out / f"sweep_{key}.svg")
    best = res.max_achieved()
    for name in sorted(best):
        print(f"{name:10s} max completed gg {best[name]}")
    failed_all = any(r[-1].failed for r in res.reports.values())
    return 2 if failed_all and opts["strict"] else 0


def cmd_finetune(cfg, opts, out: Path) -> int:
    from ffsteer.controllers.ehd import EhdFF
    from ffsteer.harness.collect import ehd_samples
    from ffsteer.harness.figures import laptime_plot
    from ffsteer.harness.finetune import finetune_loop
    from ffsteer.harness.telemetry import TelemetryLog
    from ffsteer.learning.ff import LearnedFF
    from ffsteer.learning.train import TrainConfig

    ctrls = _controllers(opts["controllers"], cfg)
    ehd_data = {}
    for name, ff in ctrls.items():
        if isinstance(ff, EhdFF):
            if not opts["telemetry"]:
                raise ValueError("EHD fine-tuning needs --telemetry with its fitting data")
            log = TelemetryLog.from_csv(opts["telemetry"])
            train, _ = _split_log(log, _parse_lap(opts["test_lap"], log))
            ehd_data[name] = ehd_samples(train, cfg.build_vehicle().wheelbase, "ay_target")
    tc = TrainConfig(lr=opts["lr"], epochs=opts["epochs"], patience=opts["patience"], stride=opts["stride"], seed=cfg.seed, fine_tune=True)
    trace = finetune_loop(cfg, ctrls, opts["iters"], cfg.gg_scale, tc, ehd_data, opts["lead"])
    _write_json(out / "finetune.json", trace.to_dict())
    laptime_plot(trace.lap_times).write(out / "lap_time_iterations.svg")
    for name, reps in trace.reports.items():
        for k, rep in enumerate(reps):
            rep.telemetry.to_csv(out / f"telemetry_{name}_iter{k}.csv")
    for name, ff in trace.final.items():
        if isinstance(ff, LearnedFF):
            ff.model.to_json(out / f"finetuned_{name}.json")
    for name in sorted(trace.lap_times):
        print(f"{name:10s} " + " ".join(f"{t:.3f}" for t in trace.lap_times[name]))
    return 0


def cmd_report(cfg, opts, out: Path) -> int:
    from ffsteer.harness.figures import emit_plots

    written = emit_plots(opts["src"], out)
    print(f"wrote {len(written)} figure(s)")
    return 0


def cmd_importance(cfg, opts, out: Path) -> int:
    import csv

    from ffsteer.harness.figures import importance_heatmap
    from ffsteer.harness.telemetry import TelemetryLog
    from ffsteer.learning.importance import permutation_importance
    from ffsteer.learning.model import model_from_json

    path = cfg.param_files.get(opts["model"])
    if not path:
        raise ValueError(f"importance needs --{opts['model']} <model file>")
    model = model_from_json(path)
    log = TelemetryLog.from_csv(opts["telemetry"])
    data, _ = _dataset(cfg, log, 0)
    data = data.select(data.lap_id == _parse_lap(opts["test_lap"], log))
    n = min(opts["n_samples"], len(data))
    imp = permutation_importance(model, data, n, np.random.default_rng(cfg.seed))
    rows = imp.to_rows()
    with open(out / f"importance_{opts['model']}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["feature", "step", "importance"])
        w.writeheader()
        for r in rows:
            w.writerow({**r, "importance": repr(r["importance"])})
    importance_heatmap(rows, f"Permutation importance ({opts['model']})").write(out / f"importance_{opts['model']}.svg")
    ch, k = imp.top()
    print(f"most important feature: {ch} at step {k}")
    return 0


HANDLERS = {
    "track-build": cmd_track_build,
    "collect": cmd_collect,
    "fit-ehd": cmd_fit_ehd,
    "train": cmd_train,
    "eval-open": cmd_eval_open,
    "eval-closed": cmd_eval_closed,
    "sweep": cmd_sweep,
    "finetune": cmd_finetune,
    "report": cmd_report,
    "importance": cmd_importance,
}


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        command, cfg, opts = resolve(argv)
    except UsageError as exc:
        print(f"ffsteer: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"ffsteer: invalid configuration: {exc}", file=sys.stderr)
        return 1
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", {"command": command, "run": cfg.to_dict(), "options": opts})
    try:
        return HANDLERS[command](cfg, opts, out)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"ffsteer: invalid input: {exc}", file=sys.stderr)
        return 1
    except FfSteerError as exc:
        print(f"ffsteer: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
