"""Resolve controllers from a run configuration and evaluate them in closed loop."""

from __future__ import annotations

from pathlib import Path

from ffsteer.controllers.base import FeedforwardController
from ffsteer.controllers.baseline import BaselineFF
from ffsteer.controllers.ehd import EhdFF, EhdFit
from ffsteer.harness.closed_loop import RunReport, make_report, simulate
from ffsteer.harness.collect import TrajectoryCache
from ffsteer.harness.config import RunConfig
from ffsteer.learning.ff import LearnedFF
from ffsteer.learning.model import model_from_json
from ffsteer.track import Track


def build_controller(name: str, cfg: RunConfig, wheelbase: float | None = None) -> FeedforwardController:
    """Instantiate the named feedforward from ``cfg``.

    The baseline uses the inline ``cfg.baseline`` parameters; the other
    controllers load the file given in ``cfg.param_files[name]``.
    """
    l = wheelbase if wheelbase is not None else cfg.build_vehicle().wheelbase
    if name == "baseline":
        return BaselineFF(cfg.baseline_params(), l)
    path = cfg.param_files.get(name)
    if not path:
        raise ValueError(f"controller {name!r} needs param_files[{name!r}]")
    if not Path(path).exists():
        raise FileNotFoundError(path)
    if name == "ehd":
        return EhdFF(EhdFit.from_json(path).surface, l)
    if name in ("lstm", "msnn"):
        model = model_from_json(path)
        if model.kind != name:
            raise ValueError(f"{path} holds a {model.kind} model, not {name}")
        return LearnedFF(model, l, name)
    raise ValueError(f"unknown controller {name!r}")


def eval_closed_loop(
    cfg: RunConfig,
    ff: FeedforwardController | None = None,
    name: str | None = None,
    track: Track | None = None,
    plans: TrajectoryCache | None = None,
    gg_scale: float | None = None,
) -> RunReport:
    """Drive ``cfg.n_laps`` laps at one GG scale and summarise the timed laps.

    ``ff`` defaults to the controller selected in ``cfg``. Failures (error
    threshold, divergence, leaving the track) end the run and are recorded
    in the report rather than raised.
    """
    track = track if track is not None else cfg.build_track()
    plans = plans if plans is not None else TrajectoryCache(cfg, track)
    gg = cfg.gg_scale if gg_scale is None else float(gg_scale)
    name = name or (cfg.controller if ff is None else getattr(ff, "name", cfg.controller))
    if ff is None:
        ff = build_controller(cfg.controller, cfg)
    traj = plans(gg)
    res = simulate(track, [(gg, traj)] * cfg.n_laps, cfg.build_vehicle(), ff, cfg.sim_settings())
    return make_report(name, gg, cfg.feedback, res, cfg.warmup_laps)
