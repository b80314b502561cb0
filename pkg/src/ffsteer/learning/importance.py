"""Permutation feature importance for the learned models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ffsteer.learning.data import CHANNELS, Dataset
from ffsteer.learning.model import LearnedModel


@dataclass
class Importance:
    """Mean absolute prediction change [rad] per permuted feature.

    ``grid[c, k]`` belongs to channel ``CHANNELS[c]`` at horizon step ``k``;
    ``rho`` is the curvature input (``None`` for models that ignore it).
    """

    grid: np.ndarray
    rho: float | None

    def to_rows(self) -> list[dict]:
        rows = [
            {"feature": ch, "step": k, "importance": float(self.grid[c, k])}
            for c, ch in enumerate(CHANNELS)
            for k in range(self.grid.shape[1])
        ]
        if self.rho is not None:
            rows.append({"feature": "rho", "step": "", "importance": self.rho})
        return rows

    def top(self) -> tuple[str, int]:
        c, k = np.unravel_index(int(np.argmax(self.grid)), self.grid.shape)
        return CHANNELS[c], int(k)


def permutation_importance(
    model: LearnedModel,
    data: Dataset,
    n_samples: int = 1000,
    rng: np.random.Generator | None = None,
    uses_rho: bool | None = None,
) -> Importance:
    """Shuffle one input feature at a time across a random sample subset.

    Features are permuted in physical units before normalisation, so the
    marginal distribution of every feature is preserved.
    """
    if n_samples > len(data):
        raise ValueError(f"n_samples {n_samples} exceeds dataset size {len(data)}")
    rng = rng if rng is not None else np.random.default_rng(0)
    idx = np.sort(rng.choice(len(data), size=n_samples, replace=False))
    h = data.horizons[idx]
    rho = data.rho[idx]
    base = model.predict(h, rho)
    n_steps = h.shape[1]
    grid = np.zeros((len(CHANNELS), n_steps))
    for c in range(len(CHANNELS)):
        for k in range(n_steps):
            hp = h.copy()
            hp[:, k, c] = hp[rng.permutation(n_samples), k, c]
            grid[c, k] = float(np.mean(np.abs(model.predict(hp, rho) - base)))
    if uses_rho is None:
        uses_rho = model.kind == "msnn"
    rho_imp = None
    if uses_rho:
        rho_imp = float(np.mean(np.abs(model.predict(h, rho[rng.permutation(n_samples)]) - base)))
    return Importance(grid, rho_imp)
