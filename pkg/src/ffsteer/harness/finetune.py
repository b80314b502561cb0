"""Iterative deploy-collect-retrain loop at a fixed GG scale."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ffsteer.controllers.base import FeedforwardController
from ffsteer.controllers.ehd import EhdFF, fit_ehd
from ffsteer.harness.closed_loop import RunReport
from ffsteer.harness.collect import TrajectoryCache, ehd_samples, estimate_steering_lead, rebuild_horizons
from ffsteer.harness.config import RunConfig
from ffsteer.harness.runner import eval_closed_loop
from ffsteer.learning.data import Dataset
from ffsteer.learning.ff import LearnedFF
from ffsteer.learning.train import TrainConfig, finetune

DEFAULT_FINETUNE_GG = 0.9


@dataclass
class FinetuneTrace:
    """Per-controller lap time after each deployment; entry 0 is the initial model."""

    lap_times: dict[str, list[float]] = field(default_factory=dict)
    failed: dict[str, list[bool]] = field(default_factory=dict)
    reports: dict[str, list[RunReport]] = field(default_factory=dict, repr=False)
    final: dict[str, FeedforwardController] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"lap_times": self.lap_times, "failed": self.failed}


def _adapt(
    ff: FeedforwardController,
    rep: RunReport,
    cfg: RunConfig,
    plans: TrajectoryCache,
    train_cfg: TrainConfig,
    ehd_data: dict,
    name: str,
    lead: int,
) -> FeedforwardController:
    log = rep.telemetry
    l = cfg.build_vehicle().wheelbase
    if isinstance(ff, LearnedFF):
        model = ff.model.copy()
        data = Dataset.from_log(log, rebuild_horizons(log, plans, cfg), l, lead)
        finetune(model, data, train_cfg)
        return LearnedFF(model, l, ff.name)
    if isinstance(ff, EhdFF):
        a, v, d = ehd_samples(log, l, "ay_target")
        prev = ehd_data[name]
        ext = tuple(np.concatenate([p, n]) for p, n in zip(prev, (a, v, d)))
        ehd_data[name] = ext
        return EhdFF(fit_ehd(*ext).surface, l)
    return ff


def finetune_loop(
    cfg: RunConfig,
    controllers: dict[str, FeedforwardController],
    n_iters: int = 4,
    gg_scale: float = DEFAULT_FINETUNE_GG,
    train_cfg: TrainConfig | None = None,
    ehd_data: dict | None = None,
    lead: int | None = None,
) -> FinetuneTrace:
    """Deploy, collect, adapt; repeat ``n_iters`` times.

    Each controller is first evaluated as given, then ``n_iters`` times
    adapted on its latest run and re-evaluated, giving ``n_iters + 1`` lap
    times. Learned models are fine-tuned on the new data only; EHD
    controllers refit on their original samples (``ehd_data[name]`` as
    ``(a_y, v_x, delta_dev)``) extended by every new run. A failed run is
    not trained on and the previous controller is kept. ``lead`` is the
    steering-target alignment used for the learned models' records
    (see :meth:`Dataset.from_arrays`); by default it is estimated from each
    run's telemetry.
    """
    if n_iters < 0:
        raise ValueError("n_iters must be >= 0")
    train_cfg = train_cfg or TrainConfig(fine_tune=True, epochs=20, patience=5, stride=2, seed=cfg.seed)
    ehd_data = dict(ehd_data or {})
    track = cfg.build_track()
    plans = TrajectoryCache(cfg, track)
    trace = FinetuneTrace()
    for name in sorted(controllers):
        ff = controllers[name]
        if isinstance(ff, EhdFF) and name not in ehd_data:
            raise ValueError(f"EHD controller {name!r} needs its fitting samples in ehd_data")
        times, fails, reps = [], [], []
        for it in range(n_iters + 1):
            if it > 0 and not reps[-1].failed:
                k = lead if lead is not None else estimate_steering_lead(reps[-1].telemetry, cfg.sim_settings().control_dt)
                ff = _adapt(ff, reps[-1], cfg, plans, train_cfg, ehd_data, name, k)
            rep = eval_closed_loop(cfg, ff, name, track, plans, gg_scale)
            reps.append(rep)
            times.append(rep.lap_time if rep.lap_times else float("nan"))
            fails.append(rep.failed)
        trace.lap_times[name] = times
        trace.failed[name] = fails
        trace.reports[name] = reps
        trace.final[name] = ff
    return trace
