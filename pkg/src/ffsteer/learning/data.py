"""Training records for the learned feedforward models and their normalisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ffsteer.controllers.base import MIN_VX

# horizon channel order
CH_V, CH_AX, CH_AY = 0, 1, 2
CHANNELS = ("v_x", "a_x", "a_y")


@dataclass
class Normalizer:
    """Per-channel affine scaling fitted on a training split.

    Speed and longitudinal acceleration are centred and scaled. Lateral
    acceleration, curvature and the steering-deviation target are only
    scaled, so flipping the sign of a turn flips the sign of the normalised
    inputs and output.
    """

    h_mean: np.ndarray
    h_std: np.ndarray
    rho_scale: float
    y_scale: float

    @classmethod
    def fit(cls, horizons: np.ndarray, rho: np.ndarray, target: np.ndarray) -> "Normalizer":
        flat = horizons.reshape(-1, horizons.shape[-1])
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        mean[CH_AY] = 0.0
        std[CH_AY] = np.sqrt(np.mean(flat[:, CH_AY] ** 2))
        std = np.where(std > 0.0, std, 1.0)
        rho_scale = float(np.sqrt(np.mean(rho**2))) or 1.0
        y_scale = float(np.sqrt(np.mean(target**2))) or 1.0
        return cls(mean, std, rho_scale, y_scale)

    def horizon(self, h: np.ndarray) -> np.ndarray:
        return (h - self.h_mean) / self.h_std

    def horizon_inverse(self, hn: np.ndarray) -> np.ndarray:
        return hn * self.h_std + self.h_mean

    def rho(self, rho: np.ndarray) -> np.ndarray:
        return rho / self.rho_scale

    def target(self, y: np.ndarray) -> np.ndarray:
        return y / self.y_scale

    def target_inverse(self, yn: np.ndarray) -> np.ndarray:
        return yn * self.y_scale

    def to_dict(self) -> dict:
        return {
            "h_mean": self.h_mean.tolist(),
            "h_std": self.h_std.tolist(),
            "rho_scale": self.rho_scale,
            "y_scale": self.y_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(
            np.asarray(d["h_mean"], dtype=float),
            np.asarray(d["h_std"], dtype=float),
            float(d["rho_scale"]),
            float(d["y_scale"]),
        )


@dataclass
class Dataset:
    """One record per controller step.

    ``horizons`` is (M, N, 3) in physical units; ``target`` is the measured
    steering deviation delta - a_y l / v_x^2 built from the record's first
    horizon step; ``lap_id`` drives the train/validation/test bookkeeping.
    """

    horizons: np.ndarray
    rho: np.ndarray
    target: np.ndarray
    lap_id: np.ndarray

    def __post_init__(self) -> None:
        m = len(self.horizons)
        if not (len(self.rho) == len(self.target) == len(self.lap_id) == m):
            raise ValueError("dataset arrays differ in length")
        if self.horizons.ndim != 3 or self.horizons.shape[2] != 3:
            raise ValueError("horizons must have shape (M, N, 3)")

    def __len__(self) -> int:
        return len(self.target)

    @property
    def horizon_n(self) -> int:
        return self.horizons.shape[1]

    @classmethod
    def from_arrays(
        cls,
        horizons: np.ndarray,
        delta: np.ndarray,
        lap_id: np.ndarray,
        wheelbase: float,
        lead: int = 0,
    ) -> "Dataset":
        """Build records from consecutive controller steps.

        With ``lead > 0`` record ``i`` is paired with the steering angle
        measured ``lead`` steps later, so a model learns the command that
        produces the measured angle through the steering actuator's delay.
        The last ``lead`` steps have no partner and are dropped.
        """
        if lead < 0:
            raise ValueError("lead must be >= 0")
        horizons = np.asarray(horizons, dtype=float)
        delta = np.asarray(delta, dtype=float)
        m = len(horizons) - lead
        if m <= 0:
            raise ValueError("log shorter than the lead")
        horizons = horizons[:m]
        v = np.maximum(horizons[:, 0, CH_V], MIN_VX)
        a_y = horizons[:, 0, CH_AY]
        rho = a_y / (v * v)
        target = delta[lead : lead + m] - a_y * wheelbase / (v * v)
        return cls(horizons, rho, target, np.asarray(lap_id, dtype=float)[:m])

    @classmethod
    def from_log(cls, log, horizons: np.ndarray, wheelbase: float, lead: int = 0) -> "Dataset":
        """Records from one continuous telemetry log and its reconstructed horizons."""
        return cls.from_arrays(horizons, log["delta"], log["lap_id"], wheelbase, lead)

    def select(self, mask) -> "Dataset":
        return Dataset(self.horizons[mask], self.rho[mask], self.target[mask], self.lap_id[mask])

    def laps(self, ids) -> "Dataset":
        return self.select(np.isin(self.lap_id, np.asarray(list(ids), dtype=float)))

    @property
    def lap_ids(self) -> list[int]:
        return sorted({int(v) for v in self.lap_id})

    def split_by_laps(self, every: int = 5, offset: int = 4) -> tuple["Dataset", "Dataset"]:
        """Whole laps go to validation (every ``every``-th lap starting at ``offset``).

        Holding out complete laps keeps overlapping horizons from leaking
        between the splits; spreading them over the lap list keeps the
        validation GG range representative.
        """
        ids = self.lap_ids
        val = [lap for k, lap in enumerate(ids) if k % every == offset % every]
        if not val or len(val) == len(ids):
            raise ValueError("split would leave one side empty")
        mask = np.isin(self.lap_id, np.asarray(val, dtype=float))
        return self.select(~mask), self.select(mask)

    def split_validation(self, every: int = 5, offset: int = 4) -> tuple["Dataset", "Dataset"]:
        """Lap split when there are enough laps, else the last fifth as one block."""
        if len(self.lap_ids) >= 2:
            return self.split_by_laps(every, min(offset, len(self.lap_ids) - 1))
        if len(self) < 5:
            raise ValueError("too few records to hold out a validation block")
        cut = len(self) - len(self) // 5
        return self.select(slice(0, cut)), self.select(slice(cut, None))

    def mirrored(self) -> "Dataset":
        """The same records driven as mirror-image turns.

        The vehicle is left-right symmetric, so negating lateral
        acceleration, curvature and steering deviation yields equally
        valid records.
        """
        h = self.horizons.copy()
        h[:, :, CH_AY] *= -1.0
        return Dataset(h, -self.rho, -self.target, self.lap_id.copy())

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(
            np.concatenate([self.horizons, other.horizons]),
            np.concatenate([self.rho, other.rho]),
            np.concatenate([self.target, other.target]),
            np.concatenate([self.lap_id, other.lap_id]),
        )
