"""Mini-batch Adam training with early stopping, and fine-tuning."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ffsteer.errors import Diverged
from ffsteer.learning.data import Dataset, Normalizer
from ffsteer.learning.layers import Adam
from ffsteer.learning.model import LearnedModel


@dataclass
class TrainConfig:
    """Optimiser and schedule settings.

    ``stride`` keeps every ``stride``-th training record; consecutive
    controller steps are highly correlated, so thinning costs little
    accuracy and saves most of the time. Validation always uses every
    record. ``mirror`` appends the left-right mirror image of every
    training record. In fine-tune mode the learning rate is multiplied by
    ``finetune_lr_scale`` and the model's existing normaliser is kept.
    ``lr_decay`` multiplies the learning rate after every epoch.
    """

    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 500
    patience: int = 25
    seed: int = 0
    fine_tune: bool = False
    finetune_lr_scale: float = 0.1
    stride: int = 1
    mirror: bool = True
    lr_decay: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or self.patience < 1 or self.stride < 1 or not 0.0 < self.lr_decay <= 1.0:
            raise ValueError(f"invalid training configuration: {self}")

    @property
    def effective_lr(self) -> float:
        return self.lr * (self.finetune_lr_scale if self.fine_tune else 1.0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("inf")

    def best_so_far(self) -> list[float]:
        return list(np.minimum.accumulate(self.val_loss)) if self.val_loss else []

    def to_dict(self) -> dict:
        return asdict(self)


def _arrays(model: LearnedModel, data: Dataset):
    n = model.normalizer
    return n.horizon(data.horizons), n.rho(data.rho), n.target(data.target)


def train(
    model: LearnedModel,
    dataset: Dataset,
    cfg: TrainConfig,
    val: Dataset | None = None,
) -> TrainHistory:
    """Fit ``model`` in place; the best-validation parameters are kept.

    Without an explicit ``val`` the dataset is split by whole laps with
    :meth:`Dataset.split_validation`. Losses are mean squared errors of the
    normalised target. Epoch ``0`` in the history is the untrained model.

    Raises:
        Diverged: if a training loss becomes non-finite.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if dataset.horizon_n != model.horizon_n:
        raise ValueError(f"dataset horizon {dataset.horizon_n} != model horizon {model.horizon_n}")
    if val is None:
        dataset, val = dataset.split_validation()
    if cfg.stride > 1:
        dataset = dataset.select(slice(None, None, cfg.stride))
    if cfg.mirror:
        dataset = dataset.concat(dataset.mirrored())
    if not cfg.fine_tune or model.normalizer is None:
        model.normalizer = Normalizer.fit(dataset.horizons, dataset.rho, dataset.target)
    rng = np.random.default_rng(cfg.seed)
    xh, xr, y = _arrays(model, dataset)
    vh, vr, vy = _arrays(model, val)
    opt = Adam(cfg.effective_lr, cfg.beta1, cfg.beta2, cfg.eps)
    theta = model.params.theta
    hist = TrainHistory()
    best = theta.copy()
    hist.best_val = model.loss(vh, vr, vy)
    hist.best_epoch = 0
    hist.train_loss.append(model.loss(xh, xr, y))
    hist.val_loss.append(hist.best_val)
    since_best = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(y))
        total = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            loss, grad = model.loss_and_grad(xh[idx], xr[idx], y[idx], True, rng)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            opt.step(theta, grad)
            total += loss * len(idx)
        hist.train_loss.append(total / len(order))
        opt.lr *= cfg.lr_decay
        v = model.loss(vh, vr, vy)
        if not np.isfinite(v):
            raise Diverged(f"non-finite validation loss at epoch {epoch}")
        hist.val_loss.append(v)
        if v < hist.best_val:
            hist.best_val, hist.best_epoch = v, epoch
            best[:] = theta
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    theta[:] = best
    return hist


def finetune(
    model: LearnedModel,
    new_data: Dataset,
    cfg: TrainConfig,
    val: Dataset | None = None,
) -> TrainHistory:
    """Continue training a fitted model on new data at the reduced learning rate."""
    if model.normalizer is None:
        raise ValueError("fine-tuning needs a previously trained model")
    if not cfg.fine_tune:
        cfg = TrainConfig(**{**cfg.to_dict(), "fine_tune": True})
    return train(model, new_data, cfg, val)


def build_and_train(
    kind: str,
    dataset: Dataset,
    cfg: TrainConfig,
    val: Dataset | None = None,
    **arch,
) -> tuple[LearnedModel, TrainHistory]:
    """Initialise a fresh ``"lstm"`` or ``"msnn"`` model from ``cfg.seed`` and train it.

    MS-NN gating boundaries are placed at quantiles of the normalised
    training inputs, so the normaliser is fitted here first; :func:`train`
    then refits the same statistics.
    """
    from ffsteer.learning.lstm import LstmFfModel
    from ffsteer.learning.msnn import MsnnModel

    if val is None:
        dataset, val = dataset.split_validation()
    rng = np.random.default_rng(cfg.seed)
    if kind == "lstm":
        model: LearnedModel = LstmFfModel(horizon_n=dataset.horizon_n, rng=rng, **arch)
    elif kind == "msnn":
        fit_set = dataset.select(slice(None, None, cfg.stride))
        norm = Normalizer.fit(fit_set.horizons, fit_set.rho, fit_set.target)
        gate = MsnnModel.gate_inputs(norm.horizon(fit_set.horizons))
        model = MsnnModel.from_data(gate, horizon_n=dataset.horizon_n, rng=rng, **arch)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    hist = train(model, dataset, TrainConfig(**{**cfg.to_dict(), "fine_tune": False}), val)
    return model, hist
