"""Serializable run configuration and the objects it resolves to."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ffsteer.controllers.baseline import BaselineParams
from ffsteer.controllers.lateral import FeedbackGains, TargetGains
from ffsteer.harness.closed_loop import SimSettings
from ffsteer.planner import GgLimits, Trajectory, plan_velocity
from ffsteer.track import Track, build_synthetic_track, default_segments
from ffsteer.vehicle import VehicleParams

CONTROLLERS = ("baseline", "ehd", "msnn", "lstm")


@dataclass
class RunConfig:
    """Everything needed to reproduce a run bit-exactly.

    ``track_segments`` is used unless ``track_file`` names a centerline CSV.
    ``vehicle`` holds inline parameter overrides; ``vehicle_file`` a JSON
    file that replaces the defaults. Controller parameter files are keyed
    by controller name (``ehd`` -> ehd.json, ``lstm``/``msnn`` -> model JSON).
    """

    track_segments: list = field(default_factory=lambda: [s.to_dict() for s in default_segments()])
    track_file: str | None = None
    track_spacing: float = 1.0
    vehicle: dict = field(default_factory=dict)
    vehicle_file: str | None = None
    controller: str = "baseline"
    param_files: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=lambda: asdict(BaselineParams()))
    feedback_gains: dict = field(default_factory=lambda: FeedbackGains().to_dict())
    target_gains: dict = field(default_factory=lambda: TargetGains().to_dict())
    limits: dict = field(default_factory=lambda: {"a_x_max_drive": 10.0, "a_x_max_brake": 25.0, "a_y_max": 25.0})
    v_cap: float = 80.0
    gg_scale: float = 0.5
    gg_grid: list = field(default_factory=list)
    feedback: bool = True
    n_laps: int = 3
    warmup_laps: int = 1
    seed: int = 0
    plant_dt: float = 0.001
    substeps: int = 10
    horizon_n: int = 10
    out: str = "run"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.n_laps <= self.warmup_laps or self.warmup_laps < 0:
            raise ValueError("need n_laps > warmup_laps >= 0")
        if not (0.0 < self.plant_dt <= 0.005) or self.substeps < 1:
            raise ValueError("plant_dt must be in (0, 0.005] and substeps >= 1")
        if self.horizon_n < 1:
            raise ValueError("horizon_n must be >= 1")
        if list(self.gg_grid) != sorted(self.gg_grid):
            raise ValueError("gg_grid must be sorted ascending")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update(changes)
        return RunConfig.from_dict(d)

    def digest(self) -> str:
        """Hash of the canonical JSON form, ignoring the output directory."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    # resolved objects

    def build_track(self) -> Track:
        if self.track_file:
            return Track.from_csv(self.track_file, closed=True, spacing=self.track_spacing)
        return build_synthetic_track(self.track_segments, closed=True, spacing=self.track_spacing)

    def build_vehicle(self) -> VehicleParams:
        base = VehicleParams.from_json(self.vehicle_file).to_dict() if self.vehicle_file else VehicleParams().to_dict()
        base.update(self.vehicle)
        return VehicleParams.from_dict(base)

    def gg_limits(self, gg_scale: float | None = None) -> GgLimits:
        return GgLimits(**self.limits, gg_scale=self.gg_scale if gg_scale is None else gg_scale)

    def plan(self, track: Track, gg_scale: float | None = None) -> Trajectory:
        return plan_velocity(track, self.gg_limits(gg_scale), self.v_cap)

    def baseline_params(self) -> BaselineParams:
        return BaselineParams(**self.baseline)

    def sim_settings(self, feedback: bool | None = None) -> SimSettings:
        fb = dict(self.feedback_gains)
        fb["enabled"] = self.feedback if feedback is None else feedback
        return SimSettings(
            plant_dt=self.plant_dt,
            substeps=self.substeps,
            horizon_n=self.horizon_n,
            feedback=FeedbackGains(**fb),
            targets=TargetGains(**self.target_gains),
        )
