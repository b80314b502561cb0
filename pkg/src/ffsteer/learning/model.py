"""Shared plumbing for the learned steering-deviation models."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ffsteer.learning.data import Dataset, Normalizer
from ffsteer.learning.layers import ParamSet

FORMAT_VERSION = 1


class LearnedModel:
    """A network mapping a normalised horizon (and curvature) to a normalised delta_dev.

    Subclasses define ``kind``, build ``self.params`` and implement
    :meth:`forward` and :meth:`backward` on normalised batches. The
    :class:`Normalizer` is attached by training and turns the model into a
    physical-units predictor through :meth:`predict`.
    """

    kind = "model"

    def __init__(self, params: ParamSet, horizon_n: int, normalizer: Normalizer | None = None):
        self.params = params
        self.horizon_n = int(horizon_n)
        self.normalizer = normalizer

    # subclasses -----------------------------------------------------------
    def arch(self) -> dict:
        raise NotImplementedError

    def forward(self, hn: np.ndarray, rho_n: np.ndarray, train: bool = False, rng=None):
        """Returns (prediction of shape (B,), cache)."""
        raise NotImplementedError

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        """Gradient of ``sum(dy * y)`` with respect to the flat parameter vector."""
        raise NotImplementedError

    @classmethod
    def from_arch(cls, arch: dict, rng: np.random.Generator | None = None) -> "LearnedModel":
        raise NotImplementedError

    # shared ---------------------------------------------------------------
    def loss_and_grad(self, hn, rho_n, yn, train: bool = False, rng=None) -> tuple[float, np.ndarray]:
        """Mean squared error on normalised targets and its gradient."""
        pred, cache = self.forward(hn, rho_n, train, rng)
        r = pred - yn
        loss = float(np.mean(r * r))
        return loss, self.backward(2.0 * r / len(r), cache)

    def loss(self, hn, rho_n, yn) -> float:
        pred, _ = self.forward(hn, rho_n)
        return float(np.mean((pred - yn) ** 2))

    def _require_normalizer(self) -> Normalizer:
        if self.normalizer is None:
            raise ValueError(f"{self.kind} model has no normalizer; train it or load one first")
        return self.normalizer

    def predict(self, horizons: np.ndarray, rho: np.ndarray, batch: int = 4096) -> np.ndarray:
        """delta_dev [rad] for physical-unit horizons (M, N, 3) and curvatures (M,)."""
        norm = self._require_normalizer()
        horizons = np.asarray(horizons, dtype=float)
        if horizons.ndim != 3 or horizons.shape[1] != self.horizon_n:
            raise ValueError(f"expected horizons of shape (M, {self.horizon_n}, 3), got {horizons.shape}")
        rho = np.asarray(rho, dtype=float)
        out = np.empty(len(horizons))
        for lo in range(0, len(horizons), batch):
            sl = slice(lo, lo + batch)
            pred, _ = self.forward(norm.horizon(horizons[sl]), norm.rho(rho[sl]))
            out[sl] = norm.target_inverse(pred)
        return out

    def predict_dataset(self, data: Dataset) -> np.ndarray:
        return self.predict(data.horizons, data.rho)

    def copy(self) -> "LearnedModel":
        other = type(self).from_arch(self.arch())
        other.params.theta[:] = self.params.theta
        other.normalizer = self.normalizer
        return other

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "arch": self.arch(),
            "normalizer": None if self.normalizer is None else self.normalizer.to_dict(),
            "params": self.params.to_dict(),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def model_from_dict(d: dict) -> LearnedModel:
    """Rebuild a model of any registered kind from :meth:`LearnedModel.to_dict` output."""
    from ffsteer.learning.lstm import LstmFfModel
    from ffsteer.learning.msnn import MsnnModel

    version = d.get("version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    kinds = {LstmFfModel.kind: LstmFfModel, MsnnModel.kind: MsnnModel}
    if d.get("kind") not in kinds:
        raise ValueError(f"unknown model kind {d.get('kind')!r}")
    model = kinds[d["kind"]].from_arch(d["arch"])
    model.params.load_dict(d["params"])
    if d.get("normalizer") is not None:
        model.normalizer = Normalizer.from_dict(d["normalizer"])
    return model


def model_from_json(path: str | Path) -> LearnedModel:
    return model_from_dict(json.loads(Path(path).read_text()))
