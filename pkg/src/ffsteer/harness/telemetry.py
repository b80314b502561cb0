"""Column-oriented telemetry log with CSV round-trip."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COLUMNS = (
    "t", "s", "x", "y", "yaw", "vx", "vy", "yaw_rate", "delta", "delta_ff", "delta_fb",
    "ax_meas", "ay_meas", "ay_target", "ax_target", "v_target", "lat_err", "head_err",
    "lap_id", "gg_scale",
)


@dataclass
class TelemetryLog:
    """100 Hz simulation ground truth; every column is a float array."""

    columns: dict = field(default_factory=lambda: {c: np.empty(0) for c in COLUMNS})

    def __post_init__(self) -> None:
        missing = [c for c in COLUMNS if c not in self.columns]
        if missing:
            raise ValueError(f"telemetry missing columns: {missing}")
        self.columns = {c: np.asarray(self.columns[c], dtype=float) for c in COLUMNS}
        n = {len(v) for v in self.columns.values()}
        if len(n) > 1:
            raise ValueError("telemetry columns differ in length")

    def __len__(self) -> int:
        return len(self.columns["t"])

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    @property
    def lap_ids(self) -> list[int]:
        return sorted({int(v) for v in self.columns["lap_id"]})

    def select(self, mask: np.ndarray) -> "TelemetryLog":
        return TelemetryLog({c: v[mask] for c, v in self.columns.items()})

    def laps(self, ids) -> "TelemetryLog":
        ids = set(int(i) for i in ids)
        mask = np.array([int(v) in ids for v in self.columns["lap_id"]], dtype=bool)
        return self.select(mask)

    def truncate(self, n: int) -> "TelemetryLog":
        return TelemetryLog({c: v[:n] for c, v in self.columns.items()})

    @staticmethod
    def concat(logs) -> "TelemetryLog":
        logs = list(logs)
        if not logs:
            return TelemetryLog()
        return TelemetryLog({c: np.concatenate([lg.columns[c] for lg in logs]) for c in COLUMNS})

    @staticmethod
    def from_rows(rows: np.ndarray) -> "TelemetryLog":
        rows = np.asarray(rows, dtype=float).reshape(-1, len(COLUMNS))
        return TelemetryLog({c: rows[:, i].copy() for i, c in enumerate(COLUMNS)})

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.columns[c] for c in COLUMNS]) if len(self) else np.empty((0, len(COLUMNS)))

    def to_csv(self, path: str | Path) -> None:
        # %.17g round-trips float64 exactly
        np.savetxt(path, self.as_matrix(), fmt="%.17g", delimiter=",", header=",".join(COLUMNS), comments="")

    @classmethod
    def from_csv(cls, path: str | Path) -> "TelemetryLog":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            data = np.empty((0, len(header)))
        cols = {name: data[:, i] for i, name in enumerate(header)}
        return cls(cols)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.as_matrix()).tobytes()).hexdigest()
